"""Uniform tensor grids, the symmetric cubic Lagrange basis and Simpson quadrature.

Every field in the package lives on a :class:`UniformGrid`: an odd number of
nodes per axis, equal spacing in all axes, anchored at the lower corner of a
box.  Off-node values are reconstructed with the symmetric cubic Lagrange
interpolant, whose 1-D reference function is :func:`reference_basis_eval`.

Boundary stencils are governed by an *extension policy*:

``"zero"``
    ghost nodes carry zero (densities under homogeneous Dirichlet data),
``"clamp"``
    the 4-point stencil is shifted to the nearest fully interior one
    (one-sided, may extrapolate),
``"reflect"``
    even reflection of both the point and the ghost nodes (Neumann),
``"reflect_odd"``
    odd reflection of the ghost nodes (derivatives of Neumann data).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

#: Half-order of the basis; the polynomial order is ``2 * P_ORDER + 1``.
P_ORDER = 1
Q_ORDER = 2 * P_ORDER + 1
SUPPORT_RADIUS = P_ORDER + 1

POLICIES = ("zero", "clamp", "reflect", "reflect_odd")
_POLICY_CODE = {name: code for code, name in enumerate(POLICIES)}


@dataclass(frozen=True)
class UniformGrid:
    """Tensor grid with ``nodes_per_axis`` nodes of spacing ``dx`` per axis."""

    dim: int
    dx: float
    nodes_per_axis: int
    lower: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.nodes_per_axis < 5:
            raise ValueError("need at least 5 nodes per axis for the cubic stencil")
        if (self.nodes_per_axis - 1) % 2:
            raise ValueError("cell count per axis must be even (composite Simpson)")
        lower = tuple(float(a) for a in self.lower) or (0.0,) * self.dim
        if len(lower) != self.dim:
            raise ValueError("lower corner has wrong dimension")
        object.__setattr__(self, "lower", lower)

    @classmethod
    def from_box(cls, lower, upper, dx: float) -> "UniformGrid":
        """Grid on ``[lower, upper]^d`` (same extent in every axis).

        The number of cells is the even integer closest to ``(upper-lower)/dx``
        and ``dx`` is then adjusted so the box is covered exactly.
        """
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        lengths = upper - lower
        if np.any(lengths <= 0) or not np.allclose(lengths, lengths[0]):
            raise ValueError("box must have equal positive extent in every axis")
        cells = 2 * max(2, int(round(lengths[0] / dx / 2.0)))
        return cls(len(lower), float(lengths[0] / cells), cells + 1, tuple(lower))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.nodes_per_axis**self.dim

    @property
    def upper(self) -> tuple[float, ...]:
        width = (self.nodes_per_axis - 1) * self.dx
        return tuple(a + width for a in self.lower)

    def axis(self, j: int = 0) -> np.ndarray:
        return self.lower[j] + self.dx * np.arange(self.nodes_per_axis)

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)`` in C order."""
        axes = [self.axis(j) for j in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node(self, index) -> np.ndarray:
        index = np.atleast_1d(np.asarray(index))
        return np.asarray(self.lower) + self.dx * index

    def index(self, x) -> tuple[int, ...]:
        """Multi-index of the node closest to ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return tuple(int(i) for i in np.rint((x - np.asarray(self.lower)) / self.dx))

    def boundary_mask(self) -> np.ndarray:
        """Boolean array (grid shape) flagging nodes on the box boundary."""
        mask = np.zeros(self.shape, dtype=bool)
        for j in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[j] = 0
            mask[tuple(sl)] = True
            sl[j] = -1
            mask[tuple(sl)] = True
        return mask

    def refined(self) -> "UniformGrid":
        return UniformGrid(self.dim, self.dx / 2, 2 * self.nodes_per_axis - 1, self.lower)


# --------------------------------------------------------------------------
# basis


def reference_basis_eval(xi):
    """Symmetric cubic Lagrange reference function (vectorized).

    ``beta(0) = 1``, ``beta(k) = 0`` for other integers, support ``[-2, 2]``.
    """
    s = np.abs(np.asarray(xi, dtype=float))
    inner = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
    outer = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0
    out = np.where(s <= 1.0, inner, np.where(s <= 2.0, outer, 0.0))
    return out if out.ndim else float(out)


def basis_eval(i, x, grid: UniformGrid) -> float:
    """Value at ``x`` of the basis function attached to grid multi-index ``i``."""
    i = np.atleast_1d(np.asarray(i, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    offsets = (x - np.asarray(grid.lower)) / grid.dx - i
    return float(np.prod(reference_basis_eval(offsets)))


def _lagrange4(s):
    """Cubic Lagrange weights on nodes 0,1,2,3 at local coordinate ``s``."""
    s0, s1, s2, s3 = s, s - 1.0, s - 2.0, s - 3.0
    return np.stack(
        [-s1 * s2 * s3 / 6.0, s0 * s2 * s3 / 2.0, -s0 * s1 * s3 / 2.0, s0 * s1 * s2 / 6.0],
        axis=-1,
    )


def axis_stencil(coord, lower: float, dx: float, n: int, policy: str):
    """4-point stencil of a batch of 1-D coordinates.

    Returns ``(idx, w)`` with shapes ``coord.shape + (4,)``: node indices that
    are always valid (``0 <= idx < n``) and weights that already contain the
    extension policy (zero for dropped ghosts, sign flips for odd
    reflection).  Then ``I[f](coord) = sum(w * f[idx], -1)``.
    """
    coord = np.asarray(coord, dtype=float)
    last = n - 1
    u = (coord - lower) / dx
    if policy in ("reflect", "reflect_odd"):
        # both extensions are 2*last periodic; fold the point into [0, last]
        period = 2.0 * last
        u = np.mod(u, period)
        over = u > last
        u = np.where(over, period - u, u)
        sign_pt = np.where(over, -1.0, 1.0) if policy == "reflect_odd" else None
    cell = np.floor(u).astype(np.int64)
    if policy == "clamp":
        start = np.clip(cell - 1, 0, n - 4)
    else:
        start = cell - 1
    w = _lagrange4(u - start)
    idx = start[..., None] + np.arange(4)
    if policy == "zero":
        inside = (idx >= 0) & (idx <= last)
        w = np.where(inside, w, 0.0)
        idx = np.clip(idx, 0, last)
    elif policy in ("reflect", "reflect_odd"):
        low = idx < 0
        high = idx > last
        idx = np.where(low, -idx, np.where(high, 2 * last - idx, idx))
        if sign_pt is not None:
            w = np.where(low | high, -w, w) * sign_pt[..., None]
    elif policy != "clamp":
        raise ValueError(f"unknown extension policy {policy!r}")
    return idx, w


def interpolation_stencil(x, grid: UniformGrid, policy: str = "zero"):
    """Flat-index stencil of points ``x`` (shape ``(..., dim)``).

    Returns ``(idx, w)`` of shape ``(..., 4**dim)`` in terms of the flattened
    (C order) nodal array.
    """
    x = np.asarray(x, dtype=float)
    if grid.dim == 1:
        if x.shape and x.shape[-1] == 1:
            x = x[..., 0]
        return axis_stencil(x, grid.lower[0], grid.dx, grid.nodes_per_axis, policy)
    n = grid.nodes_per_axis
    ix, wx = axis_stencil(x[..., 0], grid.lower[0], grid.dx, n, policy)
    iy, wy = axis_stencil(x[..., 1], grid.lower[1], grid.dx, n, policy)
    idx = ix[..., :, None] * n + iy[..., None, :]
    w = wx[..., :, None] * wy[..., None, :]
    lead = idx.shape[:-2]
    return idx.reshape(lead + (16,)), w.reshape(lead + (16,))


@numba.njit(cache=True, error_model="numpy")
def _ghost(j, w, last, policy):
    if j >= 0 and j <= last:
        return j, w
    if policy == 0:
        return 0, 0.0
    j = -j if j < 0 else 2 * last - j
    return j, (-w if policy == 3 else w)


@numba.njit(cache=True, error_model="numpy")
def _axis_weights(u, n, policy):
    """Scalar version of :func:`axis_stencil` (policy as integer code)."""
    last = n - 1
    sign = 1.0
    if policy >= 2 and (u < 0.0 or u > last):
        period = 2.0 * last
        u = u - period * np.floor(u / period)
        if u > last:
            u = period - u
            if policy == 3:
                sign = -1.0
    start = int(np.floor(u)) - 1
    if policy == 1:
        start = min(max(start, 0), n - 4)
    s0 = u - start
    s1 = s0 - 1.0
    s2 = s0 - 2.0
    s3 = s0 - 3.0
    j0, w0 = _ghost(start, -sign * s1 * s2 * s3 / 6.0, last, policy)
    j1, w1 = _ghost(start + 1, sign * s0 * s2 * s3 / 2.0, last, policy)
    j2, w2 = _ghost(start + 2, -sign * s0 * s1 * s3 / 2.0, last, policy)
    j3, w3 = _ghost(start + 3, sign * s0 * s1 * s2 / 6.0, last, policy)
    return j0, j1, j2, j3, w0, w1, w2, w3


@numba.njit(cache=True, error_model="numpy")
def _interp_1d(fields, u, n, policy):
    nf = fields.shape[0]
    out = np.empty((nf, u.shape[0]))
    for p in range(u.shape[0]):
        j0, j1, j2, j3, w0, w1, w2, w3 = _axis_weights(u[p], n, policy)
        for f in range(nf):
            row = fields[f]
            out[f, p] = w0 * row[j0] + w1 * row[j1] + w2 * row[j2] + w3 * row[j3]
    return out


@numba.njit(cache=True, error_model="numpy")
def _interp_2d(fields, u, v, n, policy):
    nf = fields.shape[0]
    out = np.empty((nf, u.shape[0]))
    for p in range(u.shape[0]):
        a0, a1, a2, a3, x0, x1, x2, x3 = _axis_weights(u[p], n, policy)
        b0, b1, b2, b3, y0, y1, y2, y3 = _axis_weights(v[p], n, policy)
        for f in range(nf):
            row = fields[f]
            acc = 0.0
            for ja, wa in ((a0, x0), (a1, x1), (a2, x2), (a3, x3)):
                base = ja * n
                acc += wa * (y0 * row[base + b0] + y1 * row[base + b1]
                             + y2 * row[base + b2] + y3 * row[base + b3])
            out[f, p] = acc
    return out


def interpolate_fields(fields, x, grid: UniformGrid, policy: str = "zero") -> np.ndarray:
    """Interpolate several nodal fields at the same points, sharing the stencil.

    ``fields`` has shape ``(nf,) + grid.shape`` (or ``(nf, size)``); ``x`` has
    shape ``(..., dim)``.  Returns shape ``(nf,) + x.shape[:-1]``.
    """
    code = _POLICY_CODE[policy]
    fields = np.ascontiguousarray(np.asarray(fields, dtype=float).reshape(-1, grid.size))
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    pts = x.reshape(-1, grid.dim)
    n = grid.nodes_per_axis
    if grid.dim == 1:
        u = np.ascontiguousarray((pts[:, 0] - grid.lower[0]) / grid.dx)
        out = _interp_1d(fields, u, n, code)
    else:
        u = np.ascontiguousarray((pts[:, 0] - grid.lower[0]) / grid.dx)
        v = np.ascontiguousarray((pts[:, 1] - grid.lower[1]) / grid.dx)
        out = _interp_2d(fields, u, v, n, code)
    return out.reshape((fields.shape[0],) + lead)


def interpolate(f_nodes, x, grid: UniformGrid, out_of_domain: str = "zero"):
    """Cubic interpolant of nodal values ``f_nodes`` at point(s) ``x``.

    ``x`` has shape ``(..., dim)``; in 1-D a scalar or a plain array of
    coordinates is accepted as well.  Only the ``4**dim`` nodes whose support
    contains ``x`` are touched.
    """
    x = np.asarray(x, dtype=float)
    if grid.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    out = interpolate_fields(f_nodes, x, grid, out_of_domain)[0]
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# quadrature


def simpson_weights(n: int, dx: float) -> np.ndarray:
    """1-D composite Simpson weights for ``n`` (odd) equispaced nodes."""
    if n < 3 or n % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of nodes >= 3")
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * dx / 3.0


def simpson_integrate(f_nodes, grid: UniformGrid) -> float:
    """Composite Simpson integral of nodal values over the grid box."""
    w = simpson_weights(grid.nodes_per_axis, grid.dx)
    f = np.asarray(f_nodes, dtype=float).reshape(grid.shape)
    for _ in range(grid.dim):
        f = np.tensordot(f, w, axes=([0], [0]))
    return float(f)


def gauss_cell_rule(n: int, grid: UniformGrid):
    """Per-cell ``n``-point Gauss-Legendre points and weights along one axis.

    Returns ``(points, weights)`` flattened over all cells of the axis.
    """
    xg, wg = np.polynomial.legendre.leggauss(n)
    lo = grid.lower[0] + grid.dx * np.arange(grid.nodes_per_axis - 1)
    pts = lo[:, None] + 0.5 * grid.dx * (xg[None, :] + 1.0)
    wts = np.broadcast_to(0.5 * grid.dx * wg, pts.shape)
    return pts.ravel(), wts.ravel().copy()
