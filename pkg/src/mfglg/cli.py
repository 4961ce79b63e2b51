"""Command line entry point: ``mfglg run`` and ``mfglg verify``."""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import TEST_IDS, emit_report, format_table, load_config, run_study


def _dx_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad dx list {text!r}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfglg", description="Mean field game convergence studies.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence study and write CSV, plot data and a manifest")
    run.add_argument("--config", metavar="PATH", help="flat key=value config file")
    run.add_argument("--test", choices=TEST_IDS, help="study to run (overrides the config)")
    run.add_argument("--out-dir", metavar="PATH", help="output directory")
    run.add_argument("--dx-list", type=_dx_list, metavar="DX,DX,...", help="strictly decreasing mesh sizes")
    run.add_argument("--tau", type=float, help="fixed-point tolerance")
    run.add_argument("--max-outer", type=int, help="maximum number of fixed-point iterations")

    verify = sub.add_parser("verify", help="check the core invariants and print a summary")
    verify.add_argument("--quick", action="store_true", help="skip the small end-to-end determinism run")
    return parser


def cmd_run(args) -> int:
    overrides = {"test": args.test, "out_dir": args.out_dir, "dx_list": args.dx_list,
                 "tau": args.tau, "max_outer": args.max_outer}
    cfg = load_config(args.config, overrides)
    report = run_study(cfg)
    print(format_table(report))
    for path in emit_report(report, cfg.out_dir):
        print(f"wrote {path}")
    failed = [r for r in report.runs if r.failed]
    return 1 if failed else 0


def cmd_verify(args) -> int:
    from .invariants import run_invariants

    results = run_invariants(quick=args.quick)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    n_bad = sum(not r.ok for r in results)
    print(f"{len(results) - n_bad}/{len(results)} invariants hold")
    return 1 if n_bad else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except (ValueError, OSError) as exc:
        print(f"mfglg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
