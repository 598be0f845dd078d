"""Command-line entry point.

    aimm run SPEC [--seed S] [--replications R] [--out-dir DIR] [--workers W]
    aimm compare SPEC [...same flags]
    aimm report TRACE.csv [--target NAME] [--spec SPEC] [--cpu-seconds T]
    aimm presets

``SPEC`` is a JSON file or the name of a built-in preset. Exit status is 0 on
success, 1 on a validation error and 2 when a run fails.
"""

import argparse
import json
import logging
import sys

from . import __version__
from .diagnostics import DEFAULT_KL_SAMPLES, diagnose
from .errors import AimmError, ConfigError
from .harness import _diagnostics_options, aggregate_table, load_spec, preset_names, run_experiment
from .targets import build_target
from .trace import read_trace_csv

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


def _add_run_flags(p):
    p.add_argument("spec", help="experiment JSON file or built-in preset name")
    p.add_argument("--seed", type=int, default=None, help="base seed (replication r uses seed + r)")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--out-dir", default="runs", help="output directory (default: runs)")
    p.add_argument("--workers", type=int, default=1, help="parallel replication workers")


def build_parser():
    parser = argparse.ArgumentParser(prog="aimm", description="Adaptive incremental mixture MCMC benchmarks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="run one sampler over replications"))
    _add_run_flags(sub.add_parser("compare", help="run several samplers on one target"))
    rep = sub.add_parser("report", help="recompute diagnostics from a trace CSV")
    rep.add_argument("trace")
    rep.add_argument("--target", default=None, help="built-in target name (enables KL)")
    rep.add_argument("--spec", default=None, help="spec supplying target and tail events")
    rep.add_argument("--cpu-seconds", type=float, default=0.0)
    rep.add_argument("--kl-samples", type=int, default=DEFAULT_KL_SAMPLES)
    rep.add_argument("--seed", type=int, default=0)
    sub.add_parser("presets", help="list built-in experiment presets")
    return parser


def _print_table(result):
    table = aggregate_table(result.reports, result.spec.diagnostics.get("lambda_true"))
    for lab, cols in table.items():
        parts = []
        for k, (mean, var) in ((k, v) for k, v in cols.items() if k != "_n"):
            parts.append(f"{k}={mean:.4g}" + ("" if var is None else f" (var {var:.2g})"))
        print(f"{lab} [{cols['_n']} runs]: " + ", ".join(parts))


def _cmd_run(args, compare):
    spec = load_spec(args.spec)
    if compare and len(spec.samplers) < 2:
        raise ConfigError("samplers", "compare needs at least two sampler blocks")
    if not compare and len(spec.samplers) != 1:
        raise ConfigError("samplers", "run takes exactly one sampler block; use compare")
    if args.workers < 1:
        raise ConfigError("--workers", "must be >= 1")
    result = run_experiment(spec, args.out_dir, args.workers, replications=args.replications,
                            base_seed=args.seed)
    _print_table(result)
    for lab, r, err in result.failures:
        print(f"FAILED {lab} replication {r}: {err}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_FAILED


def _cmd_report(args):
    trace = read_trace_csv(args.trace)
    trace.wall_time_seconds = args.cpu_seconds
    target, opts = None, {"tail_events": [], "modes": None, "allow_unnormalized": False}
    if args.spec:
        spec = load_spec(args.spec)
        target = build_target(spec.target["name"], **spec.target.get("params", {}))
        opts = _diagnostics_options(spec)
    elif args.target:
        target = build_target(args.target)
    if target is not None and target.dim != trace.dim:
        raise ConfigError("--target", f"target dimension {target.dim} != trace dimension {trace.dim}")
    report = diagnose(trace, target, kl_samples=args.kl_samples, seed=args.seed,
                      tail_events=opts["tail_events"], modes=opts["modes"],
                      allow_unnormalized=opts["allow_unnormalized"])
    doc = report.to_dict()
    doc.pop("sampler")
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; those are validation errors here
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in ("run", "compare"):
            return _cmd_run(args, args.command == "compare")
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "presets":
            for name in preset_names():
                print(name)
            return EXIT_OK
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except AimmError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (OSError, ValueError, KeyError) as exc:
        # unreadable files and malformed trace CSVs are input problems
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
