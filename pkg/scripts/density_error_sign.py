"""LQ 1-D density error on a dense mesh sweep.

With the default parameters the leading error term is cancelled near
dx = 0.025: the signed error at the origin flips between 0.05 and 0.025 and
again between 0.02 and 0.0125, E_2 bottoms out around dx = 0.02 and the
observed rate on the (0.05, 0.025) pair overshoots.
"""

import argparse

import numpy as np

from mfglg.harness import StudyConfig, build_problem, lq_params
from mfglg.mfg import mfg_solve
from mfglg.oracle import exact_density


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--half-sigma2", type=float, default=0.05)
    ap.add_argument("--sigma0", type=float, default=0.1, help="initial variance per axis")
    ap.add_argument("--dx", type=str, default="0.1,0.05,0.04,0.025,0.02,0.0125")
    args = ap.parse_args()
    dxs = [float(v) for v in args.dx.split(",")]
    cfg = StudyConfig(test="lq-1d", half_sigma2=args.half_sigma2, sigma0=args.sigma0, dx_list=tuple(dxs))
    params = lq_params(cfg)
    print(f"{'dx':>8} {'E_2':>10} {'err(0)':>11} {'int err':>11}")
    for dx in dxs:
        p = build_problem(cfg, dx)
        sol = mfg_solve(p)
        x = p.grid.points()
        diff = sol.m[-1] - exact_density(p.T, x, params)
        mid = p.grid.nodes_per_axis // 2
        l2 = np.sqrt(np.sum(diff**2) * p.grid.dx)
        print(f"{dx:8.4f} {l2:10.3e} {diff[mid]:11.3e} {np.sum(diff) * p.grid.dx:11.3e}")


if __name__ == "__main__":
    main()
