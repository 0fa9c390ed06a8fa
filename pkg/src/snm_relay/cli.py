"""Command-line entry point: ``snm-relay {analyze,asymptotic,simulate,sweep}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .sweep import (
    ConfigError,
    Engine,
    emit_csv,
    emit_metadata,
    load_config,
    parse_engines,
    run_sweep,
    with_overrides,
    write_csv,
)

log = logging.getLogger("snm_relay")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snm-relay",
        description="Outage analysis and simulation of multi-hop DF relaying with OFDM-SNM.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analyze": "closed-form average outage at each configured point",
        "asymptotic": "high-SNR asymptotic average outage at each configured point",
        "simulate": "Monte Carlo outage estimate at each configured point",
        "sweep": "full table over the swept parameter and configured engines",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", help="CSV output path (stdout when omitted)")
        p.add_argument("--seed", type=_u64)
        p.add_argument("--trials", type=_positive)
        p.add_argument("--engine", help="comma-separated engines, overriding the config")
        p.add_argument("--workers", type=_positive, default=1,
                       help="processes for Monte Carlo chunks; results do not depend on it")
    return parser


def _select_engines(command: str, spec, override) -> tuple[Engine, ...]:
    if command == "analyze":
        return (Engine.CLOSED_FORM,)
    if command == "asymptotic":
        return (Engine.ASYMPTOTIC,)
    if command == "simulate":
        engines = override or tuple(e for e in spec.engines if e.is_monte_carlo) or (Engine.MC_THRESHOLD,)
        if any(not e.is_monte_carlo for e in engines):
            raise ConfigError("simulate accepts only MC_THRESHOLD and MC_EXACT", field="engine")
        return engines
    return override or spec.engines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        spec = load_config(args.config)
        override = parse_engines(args.engine) if args.engine else None
        engines = _select_engines(args.command, spec, override)
        spec = with_overrides(spec, seed=args.seed, trials=args.trials, engines=engines)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        log.info("running %d points x %d engines", len(spec.values), len(spec.engines))
        rows = run_sweep(spec, workers=args.workers)
        if args.out:
            emit_csv(rows, args.out)
            emit_metadata(spec, rows, f"{args.out}.meta.json")
        else:
            write_csv(rows, sys.stdout)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failed = [r for r in rows if r.status.startswith("error")]
    for r in failed:
        log.warning("%s=%s %s: %s", r.sweep_param, r.sweep_value, r.engine.value, r.status)
    return EXIT_RUNTIME if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
