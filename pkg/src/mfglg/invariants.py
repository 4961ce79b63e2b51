"""Fast self-checks behind ``mfglg verify``.

Each check compares a library result with an independently computed value
and reports the worst deviation it saw.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .characteristics import DriftFunction, build_stencil, cn_step
from .fokker_planck import FPProblem, fp_solve
from .grid import UniformGrid, basis_eval, interpolate, simpson_integrate
from .oracle import LQParameters, riccati_pi, variance


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _check(name, value, tol) -> CheckResult:
    return CheckResult(name, bool(value <= tol), f"max deviation {value:.2e} (tol {tol:.0e})")


def check_basis() -> list[CheckResult]:
    grid = UniformGrid.from_box(-1.0, 1.0, 0.1)
    nodes = grid.axis()
    card = max(abs(basis_eval(i, nodes[j], grid) - (i == j)) for i in range(grid.nodes_per_axis)
               for j in range(grid.nodes_per_axis))
    x = np.linspace(-0.79, 0.81, 97)
    unity = np.max(np.abs(interpolate(np.ones(grid.size), x, grid) - 1.0))
    cubic = lambda s: 1.0 - 2.0 * s + 0.5 * s**2 + 3.0 * s**3
    repro = np.max(np.abs(interpolate(cubic(nodes), x, grid) - cubic(x)))
    return [_check("basis cardinality", card, 1e-14), _check("partition of unity", unity, 1e-12),
            _check("cubic reproduction", repro, 1e-12)]


def check_stencil() -> list[CheckResult]:
    out = []
    for d in (1, 2):
        st = build_stencil(d)
        moments = [st.weights.sum() - 1.0]
        for j in range(d):
            e = st.points[:, j]
            moments += [st.weights @ e, st.weights @ e**2 - 1.0, st.weights @ e**3, st.weights @ e**4 - 3.0]
        out.append(_check(f"stencil moments d={d}", float(np.max(np.abs(moments))), 1e-13))
    return out


def check_cn_step() -> list[CheckResult]:
    # linear drift b = -x: y = x + dt/2 (-x - y) + sqrt(dt) s e solves in closed form
    dt, s = 0.1, 0.3
    x = np.linspace(-1, 1, 11)[:, None]
    e = np.full_like(x, math.sqrt(3.0))
    y = cn_step(DriftFunction(lambda t, z: -z), 0.0, dt, s, x, e)
    exact = (x * (1 - dt / 2) + math.sqrt(dt) * s * e) / (1 + dt / 2)
    return [_check("cn_step linear drift", float(np.max(np.abs(y - exact))), 1e-12)]


def check_mass_conservation() -> list[CheckResult]:
    grid = UniformGrid.from_box(0.0, 1.0, 0.05)
    m0 = lambda x: 1.0 + np.cos(2 * np.pi * x[..., 0])
    drift = DriftFunction(lambda t, x: 0.8 * np.sin(2 * np.pi * x) + 0.2 * t)
    m = fp_solve(FPProblem(drift, 0.3, m0, grid, 0.01, 30, boundary="neumann"))
    sums = m.nodal_sums()
    return [_check("nodal mass conservation (neumann)", float(np.max(np.abs(sums / sums[0] - 1))), 1e-12)]


def check_oracle() -> list[CheckResult]:
    p = LQParameters(T=0.25, sigma=math.sqrt(0.1))
    t = np.linspace(0, p.T, 201)
    h = 1e-5
    dpi = (riccati_pi(t + h, p.T) - riccati_pi(t - h, p.T)) / (2 * h)
    pi = riccati_pi(t, p.T)
    riccati = float(np.max(np.abs(dpi - pi**2 + 1.0)))  # -Pi' + Pi^2 = 1 in one dimension

    def moment(tt, m):
        return -2.0 * riccati_pi(tt, p.T) * m + p.sigma**2

    sol = solve_ivp(moment, (0, p.T), [p.sigma0[0]], rtol=1e-12, atol=1e-14, dense_output=True)
    ode = float(np.max(np.abs(sol.sol(t)[0] - variance(t, p)[:, 0])))
    return [_check("Riccati residual", riccati, 1e-6), _check("variance formula vs ODE", ode, 1e-8)]


def check_simpson() -> list[CheckResult]:
    grid = UniformGrid.from_box((0.0, 0.0), (1.0, 1.0), 0.125)
    x = grid.points()
    f = (x[:, 0] ** 3 + 2 * x[:, 1] ** 2).reshape(grid.shape)
    return [_check("Simpson exact on cubics (2-D)", abs(simpson_integrate(f, grid) - (0.25 + 2.0 / 3.0)), 1e-13)]


def check_metrics() -> list[CheckResult]:
    from .harness import error_metrics, observed_rates

    grid = UniformGrid.from_box(-1.0, 1.0, 0.1)
    truth = np.exp(-grid.axis() ** 2)
    same = max(error_metrics(truth, truth, grid))
    double = max(abs(v - 1.0) for v in error_metrics(2 * truth, truth, grid))
    dx = [0.2, 0.1, 0.05, 0.025]
    rates = observed_rates(dx, [3.0 * h**2.7 for h in dx])[1:]
    return [_check("error metric identities", max(same, double), 1e-14),
            _check("rate formula", max(abs(r - 2.7) for r in rates), 1e-10)]


def check_determinism() -> list[CheckResult]:
    from .harness import StudyConfig, emit_report, read_csv, run_study

    texts = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            cfg = StudyConfig(test="lq-1d", dx_list=(0.4, 0.2), out_dir=str(Path(tmp) / str(k)))
            emit_report(run_study(cfg), cfg.out_dir)
            rows = read_csv(Path(cfg.out_dir) / "lq-1d_m.csv")
            texts.append([{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows])
    return [CheckResult("CSV determinism", texts[0] == texts[1], "two identical runs compared field by field")]


def run_invariants(quick: bool = False) -> list[CheckResult]:
    results = []
    for check in (check_basis, check_stencil, check_cn_step, check_simpson, check_mass_conservation,
                  check_oracle, check_metrics):
        results.extend(check())
    if not quick:
        results.extend(check_determinism())
    return results
