"""Nodal mass drift with and without the recorded Dirichlet loss."""

import argparse

from mfglg.harness import StudyConfig, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--test", default="lq-1d", choices=("lq-1d", "lq-2d", "local-1d"))
    ap.add_argument("--dx", type=str, default=None)
    ap.add_argument("--ref-dx", type=float, default=None, help="local-1d only")
    args = ap.parse_args()
    kw = {}
    if args.dx:
        kw["dx_list"] = tuple(float(v) for v in args.dx.split(","))
    if args.ref_dx:
        kw["ref_dx"] = args.ref_dx
    report = run_study(StudyConfig(test=args.test, out_dir="/tmp/mfglg-mass", **kw))
    print(f"{'dx':>8} {'nodal drift':>12} {'boundary loss':>14} {'balance':>10}")
    for r in report.runs + ([report.reference] if report.reference else []):
        print(f"{r.dx:8.4g} {r.mass_drift:12.3e} {r.boundary_loss:14.3e} {r.mass_balance:10.3e}")


if __name__ == "__main__":
    main()
