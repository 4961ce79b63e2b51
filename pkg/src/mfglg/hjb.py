"""Backward semi-Lagrangian scheme for the HJB equation with H(p) = |p|^2 / 2.

One backward step applies, at every node ``x_i``,

    S(f, k, i) = min_{|a| <= R} sum_l w_l [ I[f](y_l) + dt/2 F(y_l, mu(t_{k+1})) ]
                 + dt/2 |a|^2 + dt/2 F(x_i, mu(t_k)),
    y_l = x_i - dt a + sqrt(dt) sigma e_l,

where ``I`` is the cubic interpolant.  The minimisation is a nested grid
search: a coarse grid on ``[-R, R]^d`` restricted to the ball, then a few
rounds of shrinking local grids around the incumbent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .characteristics import StochasticStencil, build_stencil
from .grid import _POLICY_CODE, UniformGrid, _axis_weights, interpolate, interpolate_fields, simpson_integrate


@dataclass(frozen=True)
class BoundarySpec:
    """``kind`` is ``"dirichlet"`` (with ``values(t, x)``) or ``"neumann"``."""

    kind: str = "neumann"
    values: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann", "none"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")

    @property
    def value_policy(self) -> str:
        return "reflect" if self.kind == "neumann" else "clamp"

    @property
    def gradient_policy(self) -> str:
        return "reflect_odd" if self.kind == "neumann" else "clamp"


@dataclass
class ValueField:
    grid: UniformGrid
    dt: float
    values: np.ndarray  # (n_steps + 1,) + grid.shape
    control_ratio: Optional[np.ndarray] = None  # max |a*| / R per backward step

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    def __getitem__(self, k):
        return self.values[k]

    def at(self, t, x, policy: str = "clamp"):
        """``v(t, x) = I[v_{floor(t/dt)}](x)``."""
        k = min(int(np.floor(t / self.dt + 1e-9)), self.n_steps)
        return interpolate(self.values[k], x, self.grid, policy)


@dataclass(frozen=True)
class ControlSet:
    radius: float
    n_coarse: int = 15
    rounds: int = 3
    shrink: float = 0.25
    n_local: Optional[int] = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("control radius must be positive")
        if self.n_coarse < 2 or self.rounds < 0 or not 0 < self.shrink < 1:
            raise ValueError("invalid control search configuration")

    def coarse(self, d: int) -> np.ndarray:
        ax = np.linspace(-self.radius, self.radius, self.n_coarse)
        if d == 1:
            return ax[:, None]
        g = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
        return g[np.linalg.norm(g, axis=1) <= self.radius * (1 + 1e-12)]

    def local_offsets(self, d: int, round_: int) -> np.ndarray:
        n = self.n_local or self.n_coarse
        h = self.radius * self.shrink**round_
        ax = np.linspace(-h, h, n)
        if d == 1:
            return ax[:, None]
        return np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)

    def project(self, a: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(a, axis=-1, keepdims=True)
        scale = np.where(norm > self.radius, self.radius / np.maximum(norm, 1e-300), 1.0)
        return a * scale


# --------------------------------------------------------------------------
# couplings


class Coupling:
    """Running cost ``F(x, mu(t_k))`` for each time slice ``k``."""

    kind = "abstract"

    def __call__(self, k: int, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def shared_field(self, k: int, policy: str):
        """Nodal field the SL step may interpolate alongside the value function.

        Returns ``None`` unless the coupling needs an interpolated field with
        the same extension policy; then :meth:`evaluate` receives its values.
        """
        return None

    def evaluate(self, k: int, x, interpolated=None) -> np.ndarray:
        return self(k, x)

    def gradient_bound(self, grid: UniformGrid) -> float:
        """Sampled ``sup |grad_x F|`` used to size the control set."""
        x = grid.points()
        h = 1e-6
        best = 0.0
        for k in (0,):
            for j in range(grid.dim):
                e = np.zeros(grid.dim)
                e[j] = h
                g = (self(k, x + e) - self(k, x - e)) / (2 * h)
                best = max(best, float(np.max(np.abs(g))))
        return best


class ZeroCoupling(Coupling):
    kind = "zero"

    def __call__(self, k, x):
        return np.zeros(np.shape(x)[:-1])


class NonlocalMomentCoupling(Coupling):
    """``F(x, m) = |x - int y m(y) dy|^2 / 2`` with the moment per slice."""

    kind = "nonlocal-moment"

    def __init__(self, means):
        self.means = np.atleast_2d(np.asarray(means, dtype=float))

    @classmethod
    def from_density(cls, density, grid: UniformGrid):
        """Moments by Simpson quadrature of each nodal slice."""
        x = grid.points()
        vals = np.asarray(density).reshape(len(density), -1)
        means = np.array(
            [[simpson_integrate(x[:, j] * m, grid) for j in range(grid.dim)] for m in vals]
        )
        return cls(means)

    def __call__(self, k, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum((x - self.means[k]) ** 2, axis=-1)

    def gradient_bound(self, grid):
        lo, hi = np.asarray(grid.lower), np.asarray(grid.upper)
        far = np.maximum(np.abs(hi - self.means), np.abs(self.means - lo))
        return float(np.max(np.linalg.norm(far, axis=-1)))


class LocalCoupling(Coupling):
    """``F(x, m) = weight * m0(x) - min(cap, m(x))`` with ``m`` the interpolated density."""

    kind = "local-pointwise"

    def __init__(self, density, grid: UniformGrid, m0: Callable, cap=4.0, weight=3.0, policy="reflect",
                 m0_scalar=None):
        self.density = np.asarray(density)
        self.m0_scalar = m0_scalar  # optional compiled ``m0(y0, y1)`` for the fast SL search
        self.grid = grid
        self.m0 = m0
        self.cap = cap
        self.weight = weight
        self.policy = policy

    def __call__(self, k, x):
        x = np.asarray(x, dtype=float)
        return self.evaluate(k, x, interpolate_fields(self.density[k], x, self.grid, self.policy)[0])

    def shared_field(self, k, policy):
        return self.density[k] if policy == self.policy else None

    def evaluate(self, k, x, interpolated=None):
        if interpolated is None:
            return self(k, x)
        return self.weight * np.asarray(self.m0(x)) - np.minimum(self.cap, interpolated)


# --------------------------------------------------------------------------
# SL operator


def _objective(f_flat, xs, alphas, k, coupling, stencil, dt, sigma, grid, policy):
    """Bracketed cost for nodes ``xs`` (P, d) and controls ``alphas`` (P, C, d)."""
    noise = np.sqrt(dt) * sigma * stencil.points  # (L, d)
    feet = xs[:, None, None, :] - dt * alphas[:, :, None, :] + noise[None, None, :, :]
    active = coupling is not None and coupling.kind != "zero"
    extra = coupling.shared_field(k + 1, policy) if active else None
    if extra is None:
        vals = interpolate_fields(f_flat, feet, grid, policy)[0]
        if active:
            vals = vals + 0.5 * dt * coupling(k + 1, feet)
    else:
        both = interpolate_fields(np.stack([f_flat, np.ravel(extra)]), feet, grid, policy)
        vals = both[0] + 0.5 * dt * coupling.evaluate(k + 1, feet, both[1])
    return vals @ stencil.weights + 0.5 * dt * np.sum(alphas * alphas, axis=-1)


@numba.njit(cache=True, error_model="numpy")
def _no_density(y0, y1):
    return 0.0


@numba.njit(cache=True, error_model="numpy")
def _interp_pair(f, m, with_m, y0, y1, d, n, lo0, lo1, dx, policy):
    a0, a1, a2, a3, x0, x1, x2, x3 = _axis_weights((y0 - lo0) / dx, n, policy)
    if d == 1:
        vf = x0 * f[a0] + x1 * f[a1] + x2 * f[a2] + x3 * f[a3]
        vm = 0.0
        if with_m:
            vm = x0 * m[a0] + x1 * m[a1] + x2 * m[a2] + x3 * m[a3]
        return vf, vm
    b0, b1, b2, b3, z0, z1, z2, z3 = _axis_weights((y1 - lo1) / dx, n, policy)
    vf = 0.0
    vm = 0.0
    for ja, wa in ((a0, x0), (a1, x1), (a2, x2), (a3, x3)):
        r = ja * n
        vf += wa * (z0 * f[r + b0] + z1 * f[r + b1] + z2 * f[r + b2] + z3 * f[r + b3])
        if with_m:
            vm += wa * (z0 * m[r + b0] + z1 * m[r + b1] + z2 * m[r + b2] + z3 * m[r + b3])
    return vf, vm


@numba.njit(cache=True, error_model="numpy")
def _candidate_cost(a0, a1, x0, x1, f, m, d, n, lo0, lo1, dx, policy, noise, lw, dt,
                    mode, mean0, mean1, weight, cap, m0func):
    total = 0.0
    for l in range(lw.shape[0]):
        y0 = x0 - dt * a0 + noise[l, 0]
        y1 = 0.0
        if d == 2:
            y1 = x1 - dt * a1 + noise[l, 1]
        vf, vm = _interp_pair(f, m, mode == 2, y0, y1, d, n, lo0, lo1, dx, policy)
        if mode == 1:
            c = (y0 - mean0) ** 2
            if d == 2:
                c += (y1 - mean1) ** 2
            vf += 0.25 * dt * c
        elif mode == 2:
            vf += 0.5 * dt * (weight * m0func(y0, y1) - min(cap, vm))
        total += lw[l] * vf
    return total + 0.5 * dt * (a0 * a0 + a1 * a1)


@numba.njit(cache=True, error_model="numpy")
def _sl_search(f, m, xs, coarse, offsets, radius, noise, lw, dt, n, lower, dx, policy,
               mode, mean, weight, cap, m0func):
    P, d = xs.shape
    lo1 = lower[1] if d == 2 else 0.0
    mean1 = mean[1] if d == 2 else 0.0
    vals = np.empty(P)
    alphas = np.zeros((P, d))
    for p in range(P):
        x0 = xs[p, 0]
        x1 = xs[p, 1] if d == 2 else 0.0
        best = np.inf
        b0 = 0.0
        b1 = 0.0
        for c in range(coarse.shape[0]):
            a0 = coarse[c, 0]
            a1 = coarse[c, 1] if d == 2 else 0.0
            J = _candidate_cost(a0, a1, x0, x1, f, m, d, n, lower[0], lo1, dx, policy,
                                noise, lw, dt, mode, mean[0], mean1, weight, cap, m0func)
            if J < best:
                best, b0, b1 = J, a0, a1
        for r in range(offsets.shape[0]):
            c0, c1 = b0, b1
            rbest = np.inf
            r0 = 0.0
            r1 = 0.0
            for c in range(offsets.shape[1]):
                a0 = c0 + offsets[r, c, 0]
                a1 = c1 + offsets[r, c, 1] if d == 2 else 0.0
                norm = np.sqrt(a0 * a0 + a1 * a1)
                if norm > radius:
                    a0 *= radius / norm
                    a1 *= radius / norm
                J = _candidate_cost(a0, a1, x0, x1, f, m, d, n, lower[0], lo1, dx, policy,
                                    noise, lw, dt, mode, mean[0], mean1, weight, cap, m0func)
                if J < rbest:
                    rbest, r0, r1 = J, a0, a1
            if rbest < best:
                best, b0, b1 = rbest, r0, r1
        vals[p] = best
        alphas[p, 0] = b0
        if d == 2:
            alphas[p, 1] = b1
    return vals, alphas


def _kernel_arguments(coupling, k, grid: UniformGrid, policy):
    """Coupling data for the compiled search, or ``None`` if unsupported."""
    dummy = np.zeros(1)
    mean = np.zeros(grid.dim)
    if coupling is None or coupling.kind == "zero":
        return 0, dummy, mean, 0.0, 0.0, _no_density
    if isinstance(coupling, NonlocalMomentCoupling):
        return 1, dummy, np.ascontiguousarray(coupling.means[k], dtype=float), 0.0, 0.0, _no_density
    if isinstance(coupling, LocalCoupling) and coupling.m0_scalar is not None:
        field = coupling.shared_field(k, policy)
        if field is not None:
            m = np.ascontiguousarray(np.ravel(field), dtype=float)
            return 2, m, mean, float(coupling.weight), float(coupling.cap), coupling.m0_scalar
    return None


def _sl_minimize_compiled(f_flat, k, xs, coupling, controls, stencil, dt, sigma, grid, policy):
    args = _kernel_arguments(coupling, k + 1, grid, policy)
    if args is None:
        return None
    mode, m, mean, weight, cap, m0func = args
    d = grid.dim
    offsets = np.stack([controls.local_offsets(d, r) for r in range(1, controls.rounds + 1)]) \
        if controls.rounds else np.zeros((0, 1, d))
    noise = np.sqrt(dt) * sigma * stencil.points
    return _sl_search(
        np.ascontiguousarray(f_flat), m, np.ascontiguousarray(xs), np.ascontiguousarray(controls.coarse(d)),
        np.ascontiguousarray(offsets), float(controls.radius), np.ascontiguousarray(noise),
        np.ascontiguousarray(stencil.weights, dtype=float), float(dt), grid.nodes_per_axis,
        np.asarray(grid.lower, dtype=float), float(grid.dx), _POLICY_CODE[policy],
        mode, mean, weight, cap, m0func,
    )


def sl_minimize(f_nodes, k, xs, coupling, controls: ControlSet, stencil, dt, sigma, grid, policy="clamp",
                compiled=True):
    """Value of ``S`` and minimiser at nodes ``xs``; returns ``(values, alphas)``.

    Zero, moment and local couplings (the latter with ``m0_scalar``) go through
    a compiled search; ``compiled=False`` forces the vectorized reference path.
    """
    f_flat = np.asarray(f_nodes, dtype=float).reshape(-1)
    xs = np.asarray(xs, dtype=float).reshape(-1, grid.dim)
    P, d = xs.shape
    fast = _sl_minimize_compiled(f_flat, k, xs, coupling, controls, stencil, dt, sigma, grid, policy) \
        if compiled else None
    if fast is not None:
        j_best, a_best = fast
        if coupling is not None and coupling.kind != "zero":
            j_best = j_best + 0.5 * dt * coupling(k, xs)
        return j_best, a_best
    cand = np.broadcast_to(controls.coarse(d), (P,) + controls.coarse(d).shape)
    J = _objective(f_flat, xs, cand, k, coupling, stencil, dt, sigma, grid, policy)
    best = np.argmin(J, axis=1)
    rows = np.arange(P)
    a_best = cand[rows, best]
    j_best = J[rows, best]
    for r in range(1, controls.rounds + 1):
        cand = controls.project(a_best[:, None, :] + controls.local_offsets(d, r)[None])
        J = _objective(f_flat, xs, cand, k, coupling, stencil, dt, sigma, grid, policy)
        pick = np.argmin(J, axis=1)
        better = J[rows, pick] < j_best
        a_best = np.where(better[:, None], cand[rows, pick], a_best)
        j_best = np.where(better, J[rows, pick], j_best)
    if coupling is not None and coupling.kind != "zero":
        j_best = j_best + 0.5 * dt * coupling(k, xs)
    return j_best, a_best


def sl_operator(f_nodes, k, i, coupling, controls, stencil, dt, sigma, grid, policy="clamp"):
    """``S(f, k, i)`` at the single node with multi-index ``i``; returns ``(value, alpha)``."""
    x = grid.node(i)[None, :]
    val, alpha = sl_minimize(f_nodes, k, x, coupling, controls, stencil, dt, sigma, grid, policy)
    return float(val[0]), alpha[0]


def hjb_solve(
    coupling,
    terminal,
    grid: UniformGrid,
    dt: float,
    n_steps: int,
    controls: ControlSet,
    stencil: Optional[StochasticStencil] = None,
    sigma: float = 0.0,
    bc: BoundarySpec = BoundarySpec("neumann"),
) -> ValueField:
    """Backward sweep ``v_k = S(v_{k+1}, k)`` from the terminal slice.

    ``terminal`` is a nodal array or a callable of the node coordinates.
    Dirichlet nodes are overwritten with ``bc.values(t_k, x)`` on every slice
    below the terminal one.
    """
    stencil = stencil or build_stencil(grid.dim)
    x = grid.points()
    values = np.empty((n_steps + 1,) + grid.shape)
    term = terminal(x) if callable(terminal) else terminal
    values[-1] = np.broadcast_to(np.asarray(term, dtype=float).reshape(-1), (grid.size,)).reshape(grid.shape)
    ratio = np.zeros(n_steps)
    bmask = grid.boundary_mask().reshape(-1) if bc.kind == "dirichlet" else None
    policy = bc.value_policy
    # bound the (nodes x controls x branches x stencil) working set to ~64 MB
    n_cand = max(len(controls.coarse(grid.dim)), (controls.n_local or controls.n_coarse) ** grid.dim)
    per_node = n_cand * len(stencil) * 4**grid.dim * 16
    block = max(1, min(grid.size, int(64e6 // per_node)))
    for k in range(n_steps - 1, -1, -1):
        f = values[k + 1]
        out = np.empty(grid.size)
        amax = 0.0
        for s in range(0, grid.size, block):
            v, a = sl_minimize(f, k, x[s : s + block], coupling, controls, stencil, dt, sigma, grid, policy)
            out[s : s + block] = v
            amax = max(amax, float(np.max(np.linalg.norm(a, axis=-1))))
        if bmask is not None:
            out[bmask] = bc.values(k * dt, x[bmask])
        values[k] = out.reshape(grid.shape)
        ratio[k] = amax / controls.radius
    return ValueField(grid, dt, values, ratio)


# --------------------------------------------------------------------------
# gradient

_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_ONE_SIDED = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
)


def _diff_axis(f, dx, axis, bc_kind):
    f = np.moveaxis(f, axis, 0)
    n = f.shape[0]
    if bc_kind == "neumann":
        ext = np.concatenate([f[2:0:-1], f, f[-2:-4:-1]], axis=0)
        out = sum(c * ext[i : i + n] for i, c in enumerate(_CENTRAL) if c)
    else:
        out = np.empty_like(f)
        out[2:-2] = sum(c * f[i : n - 4 + i] for i, c in enumerate(_CENTRAL) if c)
        for j, c in enumerate(_ONE_SIDED):
            out[j] = np.tensordot(c, f[:5], axes=1)
            out[n - 1 - j] = -np.tensordot(c, f[::-1][:5], axes=1)
    return np.moveaxis(out / dx, 0, axis)


def numerical_gradient(v_slice, grid: UniformGrid, bc="dirichlet") -> np.ndarray:
    """Fourth-order finite-difference gradient, shape ``grid.shape + (d,)``.

    ``bc`` is a :class:`BoundarySpec` or its kind: ``"neumann"`` mirrors the
    data evenly, anything else uses one-sided fourth-order stencils.
    """
    kind = bc.kind if isinstance(bc, BoundarySpec) else bc
    f = np.asarray(v_slice, dtype=float).reshape(grid.shape)
    return np.stack([_diff_axis(f, grid.dx, ax, kind) for ax in range(grid.dim)], axis=-1)


def estimate_control_radius(grid: UniformGrid, T: float, coupling: Coupling, terminal=None, safety: float = 1.5) -> float:
    """``safety * (sup|grad G| + T sup|grad F|)`` from samples on the grid."""
    g_bound = 0.0
    if terminal is not None:
        g = np.asarray(terminal(grid.points()) if callable(terminal) else terminal).reshape(grid.shape)
        g_bound = float(np.max(np.abs(numerical_gradient(g, grid, "dirichlet"))))
    return safety * (g_bound + T * coupling.gradient_bound(grid))
