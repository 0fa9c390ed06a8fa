"""Sweep configuration, execution and CSV output.

Config files are flat ``key = value`` text with ``#`` comments::

    N = 4
    M = 2
    L = 2
    alpha = 2
    xi = 1
    pt_over_n0_db = 0:5:50        # start:step:stop, inclusive
    allocation_mode = equal_per_node
    distance_policy = fixed_total:5   # or explicit:2.5,2.5
    engines = closed_form, asymptotic
    trials = 1000000
    seed = 0

At most one of ``pt_over_n0_db``, ``N``, ``L``, ``alpha`` may carry several
values (a range triplet or a comma list); that parameter is swept.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analysis import OutageQuery, asymptotic_average_outage, average_outage, in_asymptotic_regime
from .channel import AllocationMode, TopologyConfig
from .modem import ModemError, ModulationParams
from .montecarlo import Mode, SimulationPlan, run

CSV_COLUMNS = ("sweep_param", "sweep_value", "engine", "outage", "trials", "failures",
               "std_error", "ci_low", "ci_high", "status")

PLACEMENT_NOTE = "fixed_total: relays assumed equidistant, each hop spanning total/L"


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class Engine(str, enum.Enum):
    CLOSED_FORM = "CLOSED_FORM"
    ASYMPTOTIC = "ASYMPTOTIC"
    MC_THRESHOLD = "MC_THRESHOLD"
    MC_EXACT = "MC_EXACT"

    @property
    def is_monte_carlo(self) -> bool:
        return self in (Engine.MC_THRESHOLD, Engine.MC_EXACT)


@dataclass(frozen=True)
class DistancePolicy:
    kind: str  # "fixed_total" | "explicit"
    total: float | None = None
    distances: tuple[float, ...] | None = None

    def for_hops(self, L: int) -> tuple[float, ...]:
        if self.kind == "fixed_total":
            return (self.total / L,) * L
        if len(self.distances) != L:
            raise ConfigError(f"explicit distances give {len(self.distances)} hops but L={L}",
                              field="distance_policy")
        return self.distances


@dataclass(frozen=True)
class SweepSpec:
    N: int
    M: int
    L: int
    alpha: float
    xi: float
    pt_over_n0_db: float
    allocation_mode: AllocationMode
    distance_policy: DistancePolicy
    swept_parameter: str
    values: tuple
    engines: tuple[Engine, ...]
    trials: int = 1_000_000
    seed: int = 0
    confidence_level: float = 0.95

    def query_at(self, value) -> OutageQuery:
        settings = {"N": self.N, "L": self.L, "alpha": self.alpha, "pt_over_n0_db": self.pt_over_n0_db}
        settings[self.swept_parameter] = value
        L = int(settings["L"])
        topology = TopologyConfig(
            distances=self.distance_policy.for_hops(L),
            alpha=float(settings["alpha"]),
            pt_over_n0=10 ** (float(settings["pt_over_n0_db"]) / 10),
            xi=self.xi,
            allocation_mode=self.allocation_mode,
        )
        return OutageQuery(topology, ModulationParams(int(settings["N"]), self.M))

    @property
    def base(self) -> OutageQuery:
        return self.query_at(self.values[0])


@dataclass
class ResultRow:
    sweep_param: str
    sweep_value: float | int
    engine: Engine
    outage: float | None
    trials: int | None = None
    failures: int | None = None
    std_error: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    status: str = "ok"
    distances: tuple[float, ...] = field(default=())


# -- parsing ---------------------------------------------------------------

_REQUIRED = ("n", "m", "l", "alpha", "xi", "pt_over_n0_db", "allocation_mode",
             "distance_policy", "engines")
_OPTIONAL = ("trials", "seed", "confidence_level")
_CANONICAL = {"n": "N", "m": "M", "l": "L"}


def _number(text: str, key: str, line: int, integer: bool = False):
    try:
        if integer:
            v = float(text)
            if not v.is_integer():
                raise ValueError
            return int(v)
        return float(text)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"expected {kind}, got {text!r}", field=key, line=line) from None


def _values(text: str, key: str, line: int, integer: bool = False) -> list:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("range must be start:step:stop", field=key, line=line)
        start, step, stop = (_number(p.strip(), key, line) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError("range needs step > 0 and stop >= start", field=key, line=line)
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + i * step, 12) for i in range(count)]
        if integer:
            if any(not float(v).is_integer() for v in vals):
                raise ConfigError("range must produce integers", field=key, line=line)
            vals = [int(v) for v in vals]
        return vals
    return [_number(p.strip(), key, line, integer) for p in text.split(",")]


def parse_config(text: str) -> SweepSpec:
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        k = key.lower()
        if k not in _REQUIRED + _OPTIONAL:
            raise ConfigError("unknown key", field=key, line=lineno)
        if k in raw:
            raise ConfigError("duplicate key", field=key, line=lineno)
        if not value:
            raise ConfigError("empty value", field=key, line=lineno)
        raw[k] = (value, lineno)
    for k in _REQUIRED:
        if k not in raw:
            raise ConfigError("missing required key", field=_CANONICAL.get(k, k))

    multi = {}
    for k, integer in (("n", True), ("l", True), ("alpha", False), ("pt_over_n0_db", False)):
        value, lineno = raw[k]
        multi[_CANONICAL.get(k, k)] = (_values(value, _CANONICAL.get(k, k), lineno, integer), lineno)
    swept = [k for k, (vals, _) in multi.items() if len(vals) > 1]
    if len(swept) > 1:
        raise ConfigError(f"only one parameter may be swept, got {', '.join(swept)}")
    swept_parameter = swept[0] if swept else "pt_over_n0_db"

    M_text, M_line = raw["m"]
    M = _number(M_text, "M", M_line, integer=True)
    try:
        ModulationParams(1, M)
    except ModemError as exc:
        raise ConfigError(str(exc), field="M", line=M_line) from None
    xi = _number(raw["xi"][0], "xi", raw["xi"][1])
    if xi < 0:
        raise ConfigError("xi must be non-negative", field="xi", line=raw["xi"][1])

    mode_text, mode_line = raw["allocation_mode"]
    try:
        allocation = AllocationMode(mode_text.lower())
    except ValueError:
        raise ConfigError("must be equal_per_node or total_uniform",
                          field="allocation_mode", line=mode_line) from None

    policy = _distance_policy(*raw["distance_policy"])
    engines = _engines(*raw["engines"])

    trials, seed, level = 1_000_000, 0, 0.95
    if "trials" in raw:
        trials = _number(raw["trials"][0], "trials", raw["trials"][1], integer=True)
        if trials < 1:
            raise ConfigError("trials must be at least 1", field="trials", line=raw["trials"][1])
    if "seed" in raw:
        seed = _number(raw["seed"][0], "seed", raw["seed"][1], integer=True)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="seed", line=raw["seed"][1])
    if "confidence_level" in raw:
        level = _number(raw["confidence_level"][0], "confidence_level", raw["confidence_level"][1])
        if not 0 < level < 1:
            raise ConfigError("confidence_level must lie in (0, 1)", field="confidence_level",
                              line=raw["confidence_level"][1])

    spec = SweepSpec(
        N=multi["N"][0][0], M=M, L=multi["L"][0][0], alpha=multi["alpha"][0][0], xi=xi,
        pt_over_n0_db=multi["pt_over_n0_db"][0][0], allocation_mode=allocation,
        distance_policy=policy, swept_parameter=swept_parameter,
        values=tuple(multi[swept_parameter][0]), engines=engines,
        trials=trials, seed=seed, confidence_level=level,
    )
    _validate(spec, multi)
    return spec


def _distance_policy(text: str, line: int) -> DistancePolicy:
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "fixed_total":
        total = _number(rest.strip(), "distance_policy", line)
        if total <= 0:
            raise ConfigError("total distance must be positive", field="distance_policy", line=line)
        return DistancePolicy("fixed_total", total=total)
    if kind == "explicit":
        ds = tuple(_number(s.strip(), "distance_policy", line) for s in rest.split(","))
        if any(d <= 0 for d in ds):
            raise ConfigError("hop distances must be positive", field="distance_policy", line=line)
        return DistancePolicy("explicit", distances=ds)
    raise ConfigError("expected fixed_total:<total> or explicit:<d1,d2,...>",
                      field="distance_policy", line=line)


def _engines(text: str, line: int) -> tuple[Engine, ...]:
    out = []
    for name in text.split(","):
        try:
            e = Engine(name.strip().upper())
        except ValueError:
            raise ConfigError(f"unknown engine {name.strip()!r}", field="engines", line=line) from None
        if e not in out:
            out.append(e)
    return tuple(out)


def parse_engines(text: str) -> tuple[Engine, ...]:
    return _engines(text, None)


def _validate(spec: SweepSpec, multi: dict) -> None:
    for N in multi["N"][0]:
        try:
            ModulationParams(N, spec.M)
        except ModemError as exc:
            raise ConfigError(str(exc), field="N", line=multi["N"][1]) from None
    for L in multi["L"][0]:
        if L < 1:
            raise ConfigError("L must be at least 1", field="L", line=multi["L"][1])
        spec.distance_policy.for_hops(L)
    for a in multi["alpha"][0]:
        if a < 0:
            raise ConfigError("alpha must be non-negative", field="alpha", line=multi["alpha"][1])


def load_config(path) -> SweepSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


# -- execution -------------------------------------------------------------

def evaluate_point(spec: SweepSpec, value, engine: Engine, workers: int = 1) -> ResultRow:
    row = ResultRow(spec.swept_parameter, value, engine, None)
    try:
        query = spec.query_at(value)
        row.distances = query.topology.distances
        if engine is Engine.CLOSED_FORM:
            row.outage = average_outage(query)
        elif engine is Engine.ASYMPTOTIC:
            row.outage = asymptotic_average_outage(query)
            if not in_asymptotic_regime(row.outage):
                row.status = "outside_asymptotic_regime"
        else:
            mode = Mode.THRESHOLD if engine is Engine.MC_THRESHOLD else Mode.EXACT
            est = run(SimulationPlan(query, spec.trials, spec.seed, mode, spec.confidence_level), workers)
            row.outage, row.trials, row.failures = est.probability, est.trials, est.failures
            row.std_error, row.ci_low, row.ci_high = est.std_error, est.ci_low, est.ci_high
    except Exception as exc:  # one bad point must not abort the sweep
        row.outage = None
        row.status = f"error: {exc}"
    return row


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[ResultRow]:
    """One row per (value, engine), in sweep order then engine order."""
    return [evaluate_point(spec, v, e, workers) for v in spec.values for e in spec.engines]


def with_overrides(spec: SweepSpec, *, seed=None, trials=None, engines=None) -> SweepSpec:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if trials is not None:
        changes["trials"] = trials
    if engines is not None:
        changes["engines"] = tuple(engines)
    return replace(spec, **changes) if changes else spec


# -- output ----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".12g")


def format_rows(rows: list[ResultRow]) -> list[list[str]]:
    return [[r.sweep_param, _fmt(r.sweep_value), r.engine.value, _fmt(r.outage), _fmt(r.trials),
             _fmt(r.failures), _fmt(r.std_error), _fmt(r.ci_low), _fmt(r.ci_high), r.status]
            for r in rows]


def write_csv(rows: list[ResultRow], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(format_rows(rows))


def emit_csv(rows: list[ResultRow], path) -> None:
    if not rows:
        raise ValueError("result table is empty")
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV: {exc.strerror}", str(path)) from None


def metadata(spec: SweepSpec, rows: list[ResultRow]) -> dict:
    return {
        "swept_parameter": spec.swept_parameter,
        "allocation_mode": spec.allocation_mode.value,
        "distance_policy": (f"fixed_total:{spec.distance_policy.total:g}"
                            if spec.distance_policy.kind == "fixed_total"
                            else "explicit:" + ",".join(f"{d:g}" for d in spec.distance_policy.distances)),
        "placement": PLACEMENT_NOTE if spec.distance_policy.kind == "fixed_total" else "explicit",
        "seed": spec.seed,
        "trials": spec.trials,
        "confidence_level": spec.confidence_level,
        "rows": [
            {"sweep_value": r.sweep_value, "engine": r.engine.value,
             "distances": list(r.distances), "total_distance": math.fsum(r.distances)}
            for r in rows
        ],
    }


def emit_metadata(spec: SweepSpec, rows: list[ResultRow], path) -> None:
    Path(path).write_text(json.dumps(metadata(spec, rows), indent=2) + "\n", encoding="utf-8")
