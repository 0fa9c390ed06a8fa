import csv
import io
import json

import pytest

from snm_relay import cli
from snm_relay.channel import AllocationMode
from snm_relay.sweep import (
    CSV_COLUMNS,
    ConfigError,
    Engine,
    ResultRow,
    emit_csv,
    load_config,
    parse_config,
    run_sweep,
    with_overrides,
    write_csv,
)

MINIMAL = """\
# one SNR curve
N = 4
M = 2
L = 2
alpha = 2
xi = 1
pt_over_n0_db = 0:5:50
allocation_mode = equal_per_node
distance_policy = fixed_total:5
engines = closed_form
"""


def config(**overrides) -> str:
    lines = []
    for line in MINIMAL.splitlines():
        key = line.split("=")[0].strip()
        if key in overrides:
            value = overrides.pop(key)
            if value is None:
                continue
            line = f"{key} = {value}"
        lines.append(line)
    lines += [f"{k} = {v}" for k, v in overrides.items()]
    return "\n".join(lines) + "\n"


def test_minimal_config(tmp_path):
    path = tmp_path / "snr.cfg"
    path.write_text(MINIMAL)
    spec = load_config(path)
    assert spec.swept_parameter == "pt_over_n0_db"
    assert spec.values == tuple(float(v) for v in range(0, 51, 5))
    assert len(spec.values) == 11
    assert spec.engines == (Engine.CLOSED_FORM,)
    assert spec.trials == 1_000_000 and spec.seed == 0 and spec.confidence_level == 0.95


def test_fixed_total_distances():
    spec = parse_config(MINIMAL)
    assert spec.base.topology.distances == (2.5, 2.5)


def test_fractional_range_has_no_drift():
    spec = parse_config(config(pt_over_n0_db="0:0.1:1"))
    assert len(spec.values) == 11
    assert spec.values[3] == 0.3


@pytest.mark.parametrize("overrides,field,fragment", [
    ({"N": 3}, "N", "N must be a power of two"),
    ({"M": 6}, "M", "power of two"),
    ({"N": "four"}, "N", "expected an integer"),
    ({"N": None}, "N", "missing required key"),
    ({"L": 0}, "L", "at least 1"),
    ({"alpha": -1}, "alpha", "non-negative"),
    ({"xi": -1}, "xi", "non-negative"),
    ({"allocation_mode": "greedy"}, "allocation_mode", "equal_per_node"),
    ({"distance_policy": "ring:3"}, "distance_policy", "fixed_total"),
    ({"distance_policy": "explicit:1,2,3"}, "distance_policy", "3 hops but L=2"),
    ({"engines": "closed_form, magic"}, "engines", "unknown engine"),
    ({"trials": 0}, "trials", "at least 1"),
    ({"seed": -4}, "seed", "unsigned"),
    ({"confidence_level": 1.5}, "confidence_level", "(0, 1)"),
    ({"pt_over_n0_db": "0:5"}, "pt_over_n0_db", "start:step:stop"),
    ({"colour": "blue"}, "colour", "unknown key"),
])
def test_config_errors_identify_field(overrides, field, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(config(**overrides))
    assert info.value.field == field
    assert fragment in str(info.value)


def test_config_error_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config(config(N=3))
    assert info.value.line == 2
    assert str(info.value).startswith("line 2, field 'N'")


def test_two_swept_parameters_rejected():
    with pytest.raises(ConfigError, match="only one parameter"):
        parse_config(config(N="2,4"))


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(MINIMAL + "N = 8\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/snm.cfg")


def test_sweep_over_L_keeps_total_distance():
    spec = parse_config(config(L="1:1:5", pt_over_n0_db=30))
    assert spec.swept_parameter == "L" and spec.values == (1, 2, 3, 4, 5)
    for L in spec.values:
        d = spec.query_at(L).topology.distances
        assert len(d) == L and sum(d) == pytest.approx(5.0)


def test_sweep_over_N_list():
    spec = parse_config(config(N="2,4,8", pt_over_n0_db=30))
    assert spec.swept_parameter == "N" and spec.values == (2, 4, 8)


def test_row_order_and_counts():
    spec = parse_config(config(engines="closed_form, asymptotic"))
    rows = run_sweep(spec)
    assert len(rows) == 22
    assert [r.engine for r in rows[:2]] == [Engine.CLOSED_FORM, Engine.ASYMPTOTIC]
    assert [r.sweep_value for r in rows[::2]] == list(spec.values)


def test_asymptotic_rows_flag_out_of_regime():
    rows = run_sweep(parse_config(config(engines="asymptotic")))
    low = [r for r in rows if r.outage > 1]
    assert low and all(r.status == "outside_asymptotic_regime" for r in low)
    assert all(r.status == "ok" for r in rows if r.outage <= 1)


def test_closed_form_rows_are_probabilities():
    rows = run_sweep(parse_config(config(engines="closed_form")))
    assert all(0 <= r.outage <= 1 for r in rows)


def test_failed_point_is_flagged_and_sweep_continues(monkeypatch):
    from snm_relay import sweep as sweep_mod

    calls = []

    def flaky(query):
        calls.append(query)
        if len(calls) == 2:
            raise RuntimeError("boom")
        return 0.5

    monkeypatch.setattr(sweep_mod, "average_outage", flaky)
    rows = run_sweep(parse_config(config(pt_over_n0_db="0:10:20")))
    assert [r.status for r in rows] == ["ok", "error: boom", "ok"]
    assert rows[1].outage is None


def test_monte_carlo_rows_carry_statistics():
    spec = with_overrides(parse_config(config(pt_over_n0_db=20, engines="mc_threshold")), trials=20_000)
    (row,) = run_sweep(spec)
    assert row.trials == 20_000 and row.failures is not None
    assert row.ci_low <= row.outage <= row.ci_high


def test_csv_columns_and_empty_fields(tmp_path):
    rows = run_sweep(parse_config(config(engines="closed_form, asymptotic")))
    out = tmp_path / "out.csv"
    emit_csv(rows, out)
    text = out.read_text(encoding="utf-8")
    lines = text.splitlines()
    assert len(lines) == 23
    assert text.endswith("\n")
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert tuple(parsed[0].keys()) == CSV_COLUMNS
    for r in parsed:
        assert r["trials"] == r["failures"] == r["std_error"] == r["ci_low"] == r["ci_high"] == ""


def test_csv_numeric_precision():
    row = ResultRow("pt_over_n0_db", 30.0, Engine.CLOSED_FORM, 0.0872161687047268)
    buf = io.StringIO()
    write_csv([row], buf)
    value = buf.getvalue().splitlines()[1].split(",")[3]
    assert float(value) == pytest.approx(0.0872161687047268, rel=1e-11)
    assert len(value.replace("0.", "", 1).lstrip("0")) >= 9


def test_emit_csv_rejects_empty_and_unwritable(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "x.csv")
    row = ResultRow("N", 2, Engine.CLOSED_FORM, 0.1)
    with pytest.raises(OSError, match="missing"):
        emit_csv([row], tmp_path / "missing" / "x.csv")


def test_rerun_byte_identical(tmp_path):
    spec = with_overrides(parse_config(config(pt_over_n0_db="10:10:30", engines="closed_form, mc_threshold")),
                          trials=30_000, seed=17)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(run_sweep(spec), a)
    emit_csv(run_sweep(spec), b)
    assert a.read_bytes() == b.read_bytes()


# -- CLI ---------------------------------------------------------------------

def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_cli_sweep_writes_csv_and_metadata(tmp_path):
    cfg = write(tmp_path, config(L="1:1:4", pt_over_n0_db=30, engines="closed_form, asymptotic"))
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 9
    meta = json.loads((tmp_path / "sweep.csv.meta.json").read_text())
    assert "equidistant" in meta["placement"]
    assert all(r["total_distance"] == pytest.approx(5.0) for r in meta["rows"])
    assert [len(r["distances"]) for r in meta["rows"]] == [1, 1, 2, 2, 3, 3, 4, 4]


def test_cli_analyze_to_stdout(tmp_path, capsys):
    cfg = write(tmp_path, config(pt_over_n0_db=40, engines="mc_exact"))
    assert cli.main(["analyze", "--config", cfg]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == ",".join(CSV_COLUMNS)
    fields = out[1].split(",")
    assert fields[2] == "CLOSED_FORM"
    assert float(fields[3]) == pytest.approx(0.0093062554911871167, rel=1e-11)


def test_cli_asymptotic(tmp_path, capsys):
    cfg = write(tmp_path, config(pt_over_n0_db=40))
    assert cli.main(["asymptotic", "--config", cfg]) == 0
    fields = capsys.readouterr().out.splitlines()[1].split(",")
    assert fields[2] == "ASYMPTOTIC" and float(fields[3]) == pytest.approx(0.009375)


def test_cli_simulate_overrides(tmp_path, capsys):
    cfg = write(tmp_path, config(pt_over_n0_db=20))
    assert cli.main(["simulate", "--config", cfg, "--trials", "5000", "--seed", "3"]) == 0
    fields = capsys.readouterr().out.splitlines()[1].split(",")
    assert fields[2] == "MC_THRESHOLD" and fields[4] == "5000"


def test_cli_simulate_rejects_analytic_engine(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    assert cli.main(["simulate", "--config", cfg, "--engine", "closed_form"]) == 1
    assert "simulate accepts only" in capsys.readouterr().err


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, config(N=3))
    assert cli.main(["sweep", "--config", cfg]) == 1
    assert "N must be a power of two" in capsys.readouterr().err


def test_cli_unwritable_output_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "no" / "x.csv")]) == 2
    assert "x.csv" in capsys.readouterr().err


def test_total_uniform_config():
    spec = parse_config(config(allocation_mode="total_uniform"))
    assert spec.allocation_mode is AllocationMode.TOTAL_UNIFORM
    assert spec.base.topology.effective_power == pytest.approx(spec.base.topology.pt_over_n0 / 2)


# -- scenario sweeps ----------------------------------------------------------

def _outages(rows, engine):
    return [r.outage for r in rows if r.engine is engine]


def test_snr_sweep_asymptote_converges():
    spec = parse_config(config(pt_over_n0_db="0:5:60", engines="closed_form, asymptotic"))
    rows = run_sweep(spec)
    closed, asym = _outages(rows, Engine.CLOSED_FORM), _outages(rows, Engine.ASYMPTOTIC)
    for db, c, a in zip(spec.values, closed, asym):
        if db >= 50:
            assert abs(a / c - 1) < 0.05


def test_hop_sweep_diminishing_returns():
    rows = run_sweep(parse_config(config(L="1,2,3,4,5", pt_over_n0_db=30)))
    vals = _outages(rows, Engine.CLOSED_FORM)
    gains = [a - b for a, b in zip(vals, vals[1:])]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert all(b < a for a, b in zip(gains, gains[1:]))


def test_total_power_split_alpha3():
    rows = run_sweep(parse_config(config(L="1:1:4", alpha=3, pt_over_n0_db=30,
                                         allocation_mode="total_uniform")))
    vals = _outages(rows, Engine.CLOSED_FORM)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_total_power_split_alpha2_is_flat_in_L():
    # equidistant hops: L * (total/L)^2 path loss times L-fold power split cancels exactly
    rows = run_sweep(parse_config(config(L="1:1:4", pt_over_n0_db=30, allocation_mode="total_uniform")))
    vals = _outages(rows, Engine.CLOSED_FORM)
    assert vals == pytest.approx([vals[0]] * 4, rel=1e-12)
