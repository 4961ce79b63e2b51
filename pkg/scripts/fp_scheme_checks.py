"""Fokker-Planck scheme alone on the OU drift: L2 rates, the error at the
stagnation node x = 0, lumped vs exact mass-matrix modes and the
Simpson-quadrature mass deviation."""

import argparse
import math

import numpy as np

from mfglg.characteristics import DriftFunction
from mfglg.fokker_planck import FPProblem, fp_solve
from mfglg.grid import UniformGrid, simpson_integrate
from mfglg.mfg import time_steps
from mfglg.oracle import ou_density

SIGMA = math.sqrt(0.1)


def solve(dx, mode):
    g = UniformGrid.from_box(-2.0, 2.0, dx)
    dt, n = time_steps(0.25, g.dx, 0.25, 4.0 / 3.0)
    m0 = lambda x: ou_density(0.0, x[..., 0])
    return fp_solve(FPProblem(DriftFunction(lambda t, x: -x), SIGMA, m0, g, dt, n, mode=mode))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dx", type=str, default="0.2,0.1,0.05,0.025,0.0125")
    ap.add_argument("--exact", action="store_true", help="also run the Gauss/Cholesky mode")
    args = ap.parse_args()
    dxs = [float(v) for v in args.dx.split(",")]
    prev = None
    print(f"{'dx':>8} {'L2 err':>10} {'rate':>6} {'err(0)':>10} {'simpson mass dev':>17} {'|lumped-exact|':>15}")
    for dx in dxs:
        m = solve(dx, "simpson")
        g = m.grid
        diff = m[-1] - ou_density(0.25, g.axis())
        err = math.sqrt(simpson_integrate(diff**2, g))
        mass = np.array([simpson_integrate(v, g) for v in m.values])
        gap = ""
        if args.exact:
            e = solve(dx, "exact")
            gap = f"{math.sqrt(simpson_integrate((m[-1] - e[-1]) ** 2, g)):15.3e}"
        rate = f"{math.log2(prev / err):6.2f}" if prev else f"{'-':>6}"
        print(f"{dx:8.4f} {err:10.3e} {rate} {diff[g.nodes_per_axis // 2]:10.3e} {np.max(np.abs(mass - mass[0])):17.3e} {gap}")
        prev = err


if __name__ == "__main__":
    main()
