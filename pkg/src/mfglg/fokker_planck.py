"""Conservative Lagrange-Galerkin scheme for the linear Fokker-Planck equation.

Two flavours share one code path:

* ``"simpson"`` -- the implementable scheme.  Both the mass matrix and the
  transport integrals are lumped with Simpson's rule centred on each node,
  which leaves the fully explicit update ``m_{k+1} = sum_l w_l B_l m_k`` with
  ``(B_l)_{ij} = beta_i(y_l(x_j))``.  Columns of ``B_l`` sum to one, so the
  nodal sum is conserved to round-off.
* ``"exact"`` -- the Galerkin integrals are computed with per-cell Gauss
  rules and the banded SPD mass matrix is Cholesky-factored once.

Boundary handling: ``"dirichlet"`` drops the basis functions of ghost nodes
(mass carried out of the box is lost and recorded), ``"neumann"`` reflects foot
points into the box and folds ghost weights onto their mirror nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .characteristics import StochasticStencil, build_stencil, cn_step
from .grid import (
    UniformGrid,
    axis_stencil,
    gauss_cell_rule,
    interpolation_stencil,
)

_FP_POLICY = {"dirichlet": "zero", "neumann": "reflect"}


def fp_policy(boundary: str) -> str:
    try:
        return _FP_POLICY[boundary]
    except KeyError:
        raise ValueError(f"unknown FP boundary {boundary!r}") from None


@dataclass
class DensityField:
    grid: UniformGrid
    dt: float
    values: np.ndarray  # (n_steps + 1,) + grid.shape
    lost_mass: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    def nodal_sums(self) -> np.ndarray:
        return self.values.reshape(self.values.shape[0], -1).sum(axis=1)

    def __getitem__(self, k):
        return self.values[k]


# --------------------------------------------------------------------------
# mass matrix


@dataclass
class MassMatrix:
    """Tensor-product mass matrix ``A = A_1 (x) ... (x) A_1``.

    In the lumped (Simpson) case ``A = (2 dx / 3)^d I``.  Otherwise the 1-D
    factor is kept in upper banded storage (``band`` of shape ``(4, n)``)
    together with its Cholesky factor.
    """

    grid: UniformGrid
    lumped: Optional[float] = None
    band: Optional[np.ndarray] = None
    _chol: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.band is not None and self._chol is None:
            self._chol = sla.cholesky_banded(self.band, lower=False)

    def axis_dense(self) -> np.ndarray:
        n = self.grid.nodes_per_axis
        if self.band is None:
            return np.eye(n) * self.lumped ** (1.0 / self.grid.dim)
        a = np.zeros((n, n))
        u = self.band.shape[0] - 1
        for d in range(u + 1):
            diag = self.band[u - d, d:]
            a += np.diag(diag, d)
            if d:
                a += np.diag(diag, -d)
        return a

    def dense(self) -> np.ndarray:
        if self.band is None:
            return np.eye(self.grid.size) * self.lumped
        a1 = self.axis_dense()
        return a1 if self.grid.dim == 1 else np.kron(a1, a1)

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self.band is None:
            return rhs / self.lumped
        out = rhs.reshape(self.grid.shape)
        for ax in range(self.grid.dim):
            moved = np.moveaxis(out, ax, 0)
            flat = moved.reshape(moved.shape[0], -1)
            sol = sla.cho_solve_banded((self._chol, False), flat)
            out = np.moveaxis(sol.reshape(moved.shape), 0, ax)
        return out.reshape(rhs.shape)


def _parse_quadrature(quadrature):
    if quadrature == "simpson":
        return "simpson", None
    if quadrature == "exact":
        return "gauss", 6
    if isinstance(quadrature, tuple) and quadrature[0] == "gauss":
        return "gauss", int(quadrature[1])
    if isinstance(quadrature, str) and quadrature.startswith("gauss"):
        return "gauss", int(quadrature[len("gauss"):].strip("()") or 4)
    raise ValueError(f"unknown quadrature {quadrature!r}")


def assemble_mass_matrix(grid: UniformGrid, quadrature="simpson") -> MassMatrix:
    """Mass matrix ``A_ij = int beta_i beta_j`` over the grid box.

    ``quadrature`` is ``"simpson"`` (lumped diagonal ``(2dx/3)^d``) or
    ``("gauss", n)``; four points per cell already integrate the piecewise
    degree-6 products exactly.
    """
    kind, npts = _parse_quadrature(quadrature)
    if kind == "simpson":
        return MassMatrix(grid, lumped=(2.0 * grid.dx / 3.0) ** grid.dim)
    n = grid.nodes_per_axis
    xq, wq = gauss_cell_rule(npts, grid)
    idx, w = axis_stencil(xq, grid.lower[0], grid.dx, n, "zero")
    a = np.zeros((n, n))
    for r in range(4):
        for c in range(4):
            np.add.at(a, (idx[:, r], idx[:, c]), wq * w[:, r] * w[:, c])
    band = np.zeros((4, n))
    for d in range(4):
        band[3 - d, d:] = np.diag(a, d)
    return MassMatrix(grid, band=band)


# --------------------------------------------------------------------------
# transport


@dataclass
class TransportMatrix:
    """Sparse transport operators ``B_l`` for one time step, one per stencil branch."""

    matrices: list
    mode: str
    weights: np.ndarray

    def apply(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float).reshape(-1)
        out = np.zeros_like(m)
        for w, b in zip(self.weights, self.matrices):
            out += w * (b @ m)
        return out


def _node_feet(b, t_k, dt, sigma, x, stencil, tol, max_iter):
    return [cn_step(b, t_k, dt, sigma, x, e, tol, max_iter) for e in stencil.points]


def simpson_transport_stencils(b, k, stencil, grid, dt, sigma, boundary="dirichlet", tol=1e-12, max_iter=50):
    """Per-branch ``(idx, w)`` stencils of the node foot points at step ``k``.

    ``idx``/``w`` have shape ``(grid.size, 4**d)``: column ``j`` of ``B_l``
    holds weights ``w[j]`` in rows ``idx[j]``.
    """
    x = grid.points()
    feet = _node_feet(b, k * dt, dt, sigma, x, stencil, tol, max_iter)
    policy = fp_policy(boundary)
    return [interpolation_stencil(y, grid, policy) for y in feet]


def _to_csc(idx, w, size):
    cols = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
    return sp.csc_matrix((w.ravel(), (idx.ravel(), cols)), shape=(size, size))


def assemble_transport(
    b,
    k: int,
    stencil: StochasticStencil,
    grid: UniformGrid,
    dt: float,
    sigma: float,
    mode="simpson",
    boundary: str = "dirichlet",
    tol: float = 1e-12,
    max_iter: int = 50,
) -> TransportMatrix:
    """Transport operators for step ``k``.

    ``mode="simpson"`` gives ``(B_l)_ij = beta_i(y_l(x_j))``;
    ``mode=("gauss", n)`` integrates ``int beta_i(y_l(x)) beta_j(x) dx`` cell by
    cell with ``n`` Gauss points per axis.
    """
    kind, npts = _parse_quadrature(mode)
    size = grid.size
    if kind == "simpson":
        stencils = simpson_transport_stencils(b, k, stencil, grid, dt, sigma, boundary, tol, max_iter)
        mats = [_to_csc(idx, w, size) for idx, w in stencils]
        return TransportMatrix(mats, "simpson", stencil.weights)

    xq, wq = gauss_cell_rule(npts, grid)
    if grid.dim == 2:
        gx, gy = np.meshgrid(xq, xq + (grid.lower[1] - grid.lower[0]), indexing="ij")
        xq = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        wq = np.outer(wq, wq).ravel()
    else:
        xq = xq[:, None]
    jdx, jw = interpolation_stencil(xq, grid, "zero")
    feet = _node_feet(b, k * dt, dt, sigma, xq, stencil, tol, max_iter)
    policy = fp_policy(boundary)
    mats = []
    for y in feet:
        idx, w = interpolation_stencil(y, grid, policy)
        rows = np.broadcast_to(idx[:, :, None], idx.shape + (jdx.shape[1],))
        cols = np.broadcast_to(jdx[:, None, :], rows.shape)
        data = wq[:, None, None] * w[:, :, None] * jw[:, None, :]
        mats.append(
            sp.csc_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size))
        )
    return TransportMatrix(mats, "exact", stencil.weights)


def fp_step(m_k, transport: TransportMatrix, mass: MassMatrix, stencil: StochasticStencil = None):
    """Advance the nodal coefficients by one step."""
    m_k = np.asarray(m_k, dtype=float)
    rhs = transport.apply(m_k)
    if transport.mode == "simpson":
        return rhs.reshape(m_k.shape)
    return mass.solve(rhs).reshape(m_k.shape)


# --------------------------------------------------------------------------
# driver


@dataclass
class FPProblem:
    """Data of a linear FP solve on a fixed box."""

    drift: Callable
    sigma: float
    m0: Callable[[np.ndarray], np.ndarray]
    grid: UniformGrid
    dt: float
    n_steps: int
    mode: object = "simpson"
    boundary: str = "dirichlet"
    tol: float = 1e-12
    max_iter: int = 50


def initial_coefficients(m0, grid: UniformGrid, mode="simpson", mass: Optional[MassMatrix] = None, gauss_points: int = 6):
    """Initial nodal coefficients: nodal samples (Simpson) or L2 projection (exact)."""
    kind, npts = _parse_quadrature(mode)
    x = grid.points()
    if kind == "simpson":
        return np.asarray(m0(x), dtype=float).reshape(grid.shape)
    mass = mass or assemble_mass_matrix(grid, ("gauss", 4))
    xq, wq = gauss_cell_rule(npts or gauss_points, grid)
    if grid.dim == 2:
        gx, gy = np.meshgrid(xq, xq + (grid.lower[1] - grid.lower[0]), indexing="ij")
        xq = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        wq = np.outer(wq, wq).ravel()
    else:
        xq = xq[:, None]
    idx, w = interpolation_stencil(xq, grid, "zero")
    vals = np.asarray(m0(xq), dtype=float).reshape(-1)
    load = np.bincount(idx.ravel(), weights=(w * (wq * vals)[:, None]).ravel(), minlength=grid.size)
    return mass.solve(load).reshape(grid.shape)


def fp_solve(problem: FPProblem, stencil: Optional[StochasticStencil] = None, m_init=None) -> DensityField:
    """March the LG scheme from ``t = 0`` to ``n_steps * dt``.

    ``m_init`` overrides the initial coefficients (used by the MFG loop to
    reuse the same initial slice every outer iteration).
    """
    grid = problem.grid
    stencil = stencil or build_stencil(grid.dim)
    kind, npts = _parse_quadrature(problem.mode)
    mass = assemble_mass_matrix(grid, "simpson" if kind == "simpson" else ("gauss", 4))
    values = np.empty((problem.n_steps + 1,) + grid.shape)
    values[0] = m_init if m_init is not None else initial_coefficients(problem.m0, grid, problem.mode, mass)
    lost = np.zeros(problem.n_steps)
    size = grid.size
    for k in range(problem.n_steps):
        m_k = values[k].reshape(-1)
        if kind == "simpson":
            stencils = simpson_transport_stencils(
                problem.drift, k, stencil, grid, problem.dt, problem.sigma,
                problem.boundary, problem.tol, problem.max_iter,
            )
            m_next = np.zeros(size)
            for wl, (idx, w) in zip(stencil.weights, stencils):
                m_next += wl * np.bincount(idx.ravel(), weights=(w * m_k[:, None]).ravel(), minlength=size)
                # column deficit: weight of foot points that left the retained basis
                lost[k] += wl * float(np.dot(1.0 - w.sum(axis=1), m_k))
        else:
            tr = assemble_transport(
                problem.drift, k, stencil, grid, problem.dt, problem.sigma,
                problem.mode, problem.boundary, problem.tol, problem.max_iter,
            )
            m_next = fp_step(m_k, tr, mass)
            lost[k] = m_k.sum() - m_next.sum()
        values[k + 1] = m_next.reshape(grid.shape)
    return DensityField(grid, problem.dt, values, lost)
