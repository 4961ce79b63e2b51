"""Fixed-point solver for the coupled HJB / Fokker-Planck system."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .characteristics import DriftFunction, build_stencil
from .fokker_planck import DensityField, FPProblem, fp_solve, initial_coefficients
from .grid import UniformGrid, interpolate_fields, simpson_integrate
from .hjb import (
    BoundarySpec,
    ControlSet,
    LocalCoupling,
    NonlocalMomentCoupling,
    ValueField,
    ZeroCoupling,
    hjb_solve,
    numerical_gradient,
)

log = logging.getLogger(__name__)


def time_steps(T: float, dx: float, c: float, gamma: float) -> tuple[float, int]:
    """``dt <= c dx^gamma`` rounded so that ``T`` is an integer number of steps."""
    n = max(1, int(np.ceil(T / (c * dx**gamma) - 1e-9)))
    return T / n, n


@dataclass
class MFGProblem:
    sigma: float
    T: float
    grid: UniformGrid
    n_steps: int
    m0: Callable[[np.ndarray], np.ndarray]
    controls: ControlSet
    coupling: str = "nonlocal-moment"  # | "local-pointwise" | "zero"
    terminal: Optional[Callable] = None  # G(x, m_T) -> nodal array; None means G = 0
    hjb_bc: BoundarySpec = field(default_factory=lambda: BoundarySpec("neumann"))
    fp_boundary: str = "neumann"
    tau: float = 1e-9
    max_outer: int = 50
    damping: float = 1.0
    local_cap: float = 4.0
    local_weight: float = 3.0
    fp_mode: object = "simpson"
    cn_tol: float = 1e-12
    cn_max_iter: int = 50
    m0_scalar: Optional[Callable] = None  # compiled m0(y0, y1) for the local coupling

    @property
    def dt(self) -> float:
        return self.T / self.n_steps


@dataclass
class IterationRecord:
    iteration: int
    increment: float
    wall_time: float


@dataclass
class MFGSolution:
    v: ValueField
    m: DensityField
    iterations: int
    increments: list  # per iteration: Simpson L1 increment per time slice
    converged: bool
    log: list = field(default_factory=list)

    @property
    def max_increments(self) -> list:
        return [float(np.max(inc)) for inc in self.increments]


def mfg_drift_from_value(v: ValueField, grid: UniformGrid, bc: BoundarySpec = BoundarySpec("dirichlet")) -> DriftFunction:
    """Drift ``b(t, x) = -I[Dv_k](x)`` with ``k = floor(t / dt)`` and ``Dv_k`` the
    fourth-order nodal gradient of slice ``k``.

    Under Dirichlet data the spatial argument is clamped to the box; under
    Neumann data the gradient is extended oddly across the walls.
    """
    policy = bc.gradient_policy
    cache: dict[int, np.ndarray] = {}

    def slice_gradient(k):
        g = cache.get(k)
        if g is None:
            if len(cache) > 3:
                cache.pop(min(cache))
            g = np.ascontiguousarray(numerical_gradient(v.values[k], grid, bc).reshape(-1, grid.dim).T)
            cache[k] = g
        return g

    def func(t, x):
        k = min(max(int(np.floor(t / v.dt + 1e-9)), 0), v.n_steps)
        g = slice_gradient(k)
        return -np.moveaxis(interpolate_fields(g, x, grid, policy), 0, -1)

    box = None
    if bc.kind != "neumann":
        box = (np.asarray(grid.lower), np.asarray(grid.upper))
    return DriftFunction(func, box=box)


def _coupling(problem: MFGProblem, m: np.ndarray):
    if problem.coupling == "zero":
        return ZeroCoupling()
    if problem.coupling == "nonlocal-moment":
        return NonlocalMomentCoupling.from_density(m, problem.grid)
    if problem.coupling == "local-pointwise":
        policy = "reflect" if problem.fp_boundary == "neumann" else "zero"
        return LocalCoupling(m, problem.grid, problem.m0, problem.local_cap, problem.local_weight, policy,
                             problem.m0_scalar)
    raise ValueError(f"unknown coupling {problem.coupling!r}")


def _terminal(problem: MFGProblem, m_T: np.ndarray):
    if problem.terminal is None:
        return 0.0
    return problem.terminal(problem.grid.points(), m_T)


def _increments(new: np.ndarray, old: np.ndarray, grid: UniformGrid) -> np.ndarray:
    return np.array([simpson_integrate(np.abs(a - b), grid) for a, b in zip(new, old)])


def mfg_solve(problem: MFGProblem, callback: Optional[Callable[[IterationRecord], None]] = None,
              initial_density: Optional[np.ndarray] = None) -> MFGSolution:
    """Picard iteration: HJB backward with the current density, FP forward with
    the resulting optimal drift, until the Simpson L1 change of the density
    (maximum over time slices) drops below ``tau``.

    The first iterate is the zero-drift diffusion of ``m0`` unless
    ``initial_density`` (shape ``(n_steps + 1,) + grid.shape``) is given.
    """
    grid = problem.grid
    stencil = build_stencil(grid.dim)
    dt, n = problem.dt, problem.n_steps
    m_init = initial_coefficients(problem.m0, grid, problem.fp_mode)

    def forward(drift):
        fp = FPProblem(drift, problem.sigma, problem.m0, grid, dt, n, problem.fp_mode,
                       problem.fp_boundary, problem.cn_tol, problem.cn_max_iter)
        return fp_solve(fp, stencil, m_init=m_init)

    if initial_density is None:
        m = forward(DriftFunction(lambda t, x: np.zeros_like(x)))
    else:
        values = np.asarray(initial_density, dtype=float).reshape((n + 1,) + grid.shape)
        m = DensityField(grid, dt, values.copy(), np.zeros(n))
    v = None
    increments, records = [], []
    converged = False
    t_start = time.perf_counter()
    it = 0
    for it in range(1, problem.max_outer + 1):
        coupling = _coupling(problem, m.values)
        v = hjb_solve(coupling, _terminal(problem, m.values[-1]), grid, dt, n,
                      problem.controls, stencil, problem.sigma, problem.hjb_bc)
        m_new = forward(mfg_drift_from_value(v, grid, problem.hjb_bc))
        if problem.damping != 1.0:
            m_new.values = problem.damping * m_new.values + (1.0 - problem.damping) * m.values
        inc = _increments(m_new.values, m.values, grid)
        increments.append(inc)
        rec = IterationRecord(it, float(inc.max()), time.perf_counter() - t_start)
        records.append(rec)
        log.info("outer iteration %d: L1 increment %.3e (%.1fs)", rec.iteration, rec.increment, rec.wall_time)
        if callback is not None:
            callback(rec)
        m = m_new
        if rec.increment < problem.tau:
            converged = True
            break
    return MFGSolution(v, m, it, increments, converged, records)
