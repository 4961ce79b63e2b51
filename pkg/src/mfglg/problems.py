"""Factories for the benchmark problems used by the convergence studies."""

from __future__ import annotations

import numba
import numpy as np

from .grid import UniformGrid
from .hjb import BoundarySpec, ControlSet
from .mfg import MFGProblem, time_steps
from .oracle import LQParameters, exact_density, exact_value


def lq_parameters(dim=1, half_sigma2=0.05, T=0.25, mu0=0.0, sigma0=0.1) -> LQParameters:
    return LQParameters(T=T, sigma=float(np.sqrt(2 * half_sigma2)), dim=dim, mu0=(mu0,) * dim, sigma0=(sigma0,) * dim)


def lq_problem(dx, params: LQParameters, box=(-2.0, 2.0), dt_rule=(0.25, 4.0 / 3.0),
               controls: ControlSet | None = None, tau=1e-9, max_outer=50) -> MFGProblem:
    """Nonlocal LQ test on ``box^d``: exact Dirichlet data for the value
    function, homogeneous Dirichlet for the density."""
    d = params.dim
    grid = UniformGrid.from_box((box[0],) * d, (box[1],) * d, dx)
    dt, n = time_steps(params.T, grid.dx, *dt_rule)
    return MFGProblem(
        sigma=params.sigma,
        T=params.T,
        grid=grid,
        n_steps=n,
        m0=lambda x: exact_density(0.0, x, params),
        controls=controls or ControlSet(1.0),
        coupling="nonlocal-moment",
        hjb_bc=BoundarySpec("dirichlet", lambda t, x: exact_value(t, x, params)),
        fp_boundary="dirichlet",
        tau=tau,
        max_outer=max_outer,
    )


def local_initial_density(x):
    """``4 cos^2(2 pi x)`` on ``[1/4, 3/4]``, zero elsewhere (unit mass, C^1)."""
    x = np.asarray(x, dtype=float)
    x1 = x[..., 0] if x.ndim and x.shape[-1] == 1 else x
    inside = (x1 >= 0.25) & (x1 <= 0.75)
    return np.where(inside, 4.0 * np.sin(2 * np.pi * (x1 - 0.25)) ** 2, 0.0)


@numba.njit(cache=True)
def local_initial_density_scalar(y0, y1):
    if 0.25 <= y0 <= 0.75:
        return 4.0 * np.sin(2 * np.pi * (y0 - 0.25)) ** 2
    return 0.0


def local_problem(dx, half_sigma2=0.05, T=0.05, dt_rule=(1.0 / 3.0, 1.5),
                  controls: ControlSet | None = None, tau=1e-9, max_outer=50) -> MFGProblem:
    """Local-coupling test on ``(0, 1)`` with homogeneous Neumann conditions."""
    grid = UniformGrid.from_box((0.0,), (1.0,), dx)
    dt, n = time_steps(T, grid.dx, *dt_rule)
    return MFGProblem(
        sigma=float(np.sqrt(2 * half_sigma2)),
        T=T,
        grid=grid,
        n_steps=n,
        m0=local_initial_density,
        m0_scalar=local_initial_density_scalar,
        controls=controls or ControlSet(4.0),
        coupling="local-pointwise",
        hjb_bc=BoundarySpec("neumann"),
        fp_boundary="neumann",
        tau=tau,
        max_outer=max_outer,
    )
