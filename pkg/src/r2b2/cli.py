"""Command line entry point: ``r2b2 run | aggregate | verify``.

Exit codes: 0 success, 1 validation, 2 numerical-failure threshold, 3 I/O.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, InputError
from .experiment import (
    FAILURE_THRESHOLD,
    METRICS,
    aggregate_trace_dir,
    build_draw,
    emit_results,
    load_config,
    run_experiment,
)
from .game import GameTrace, replay_audit

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _output_path(given, fmt, default):
    if given:
        return Path(given)
    path = Path(default)
    return path.with_suffix("." + fmt)


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.master_seed is not None:
        config.master_seed = args.master_seed
        config.validate()
    fmt = args.format or config.output.get("format", "csv")
    trace_dir = args.trace_dir or config.output.get("trace_dir")
    result = run_experiment(config, workers=args.workers, trace_dir=trace_dir, metric=args.metric)
    out = _output_path(args.output, fmt, config.output.get("path", "results.csv"))
    emit_results(result, fmt, out)
    print(f"{result.n_replications} replications ({result.n_failed} failed) -> {out}")
    if result.failure_fraction > FAILURE_THRESHOLD:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_aggregate(args) -> int:
    result = aggregate_trace_dir(args.trace_dir, metric=args.metric or "mean-regret")
    fmt = args.format or "csv"
    out = _output_path(args.output, fmt, Path(args.trace_dir) / "aggregate.csv")
    emit_results(result, fmt, out)
    print(f"{result.n_replications} traces -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    config = load_config(args.config)
    trace = GameTrace.load(args.trace)
    if trace.header.get("config_digest") not in ("", None, config.digest()):
        print("trace was produced by a different config (digest mismatch)")
        return EXIT_VALIDATION
    game = build_draw(config, int(trace.header.get("draw", 0)))
    mismatches = replay_audit(trace, game, config.agent_specs(), delta=config.delta,
                              tight_beta=config.tight_beta, kernel=config.kernel_spec(),
                              gp_prior=config.gp_prior)
    if mismatches:
        for t, agent, logged, got in mismatches[:20]:
            print(f"t={t} agent={agent}: logged {logged}, recomputed {got}")
        print(f"{len(mismatches)} mismatching selections")
        return EXIT_VALIDATION
    print(f"verified {len(trace)} iterations: every selection reproduced from prior history")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="r2b2", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--metric", choices=METRICS)
        p.add_argument("--output", "-o")

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--master-seed", type=int)
    run.add_argument("--trace-dir")
    common(run)
    run.set_defaults(func=cmd_run)

    agg = sub.add_parser("aggregate", help="aggregate persisted traces")
    agg.add_argument("trace_dir")
    common(agg)
    agg.set_defaults(func=cmd_aggregate)

    ver = sub.add_parser("verify", help="recompute a trace's selections offline")
    ver.add_argument("trace")
    ver.add_argument("config")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
