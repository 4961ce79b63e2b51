"""Discrete noise stencil and the implicit Crank-Nicolson characteristic step."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

SQRT3 = np.sqrt(3.0)


class CharacteristicsError(RuntimeError):
    """Fixed-point iteration for the implicit foot point did not converge."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class StochasticStencil:
    points: np.ndarray  # (3**d, d)
    weights: np.ndarray  # (3**d,)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


def build_stencil(d: int) -> StochasticStencil:
    """Tensor product of the three-point law {-sqrt3, 0, sqrt3} w.p. {1/6, 2/3, 1/6}."""
    if d not in (1, 2):
        raise ValueError(f"unsupported dimension {d}")
    vals = (-SQRT3, 0.0, SQRT3)
    probs = (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)
    pts, wts = [], []
    for combo in itertools.product(range(3), repeat=d):
        pts.append([vals[c] for c in combo])
        wts.append(np.prod([probs[c] for c in combo]))
    return StochasticStencil(np.array(pts), np.array(wts))


@dataclass
class DriftFunction:
    """Vector field ``b(t, x)``; ``x`` has shape ``(..., d)``.

    ``box`` (pair of corner arrays) clamps the spatial argument so the drift
    stays defined when the implicit iteration wanders outside the domain.
    """

    func: Callable[[float, np.ndarray], np.ndarray]
    lipschitz: Optional[float] = None
    box: Optional[tuple] = None

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.box is not None:
            x = np.clip(x, self.box[0], self.box[1])
        return np.broadcast_to(np.asarray(self.func(t, x), dtype=float), x.shape)


def _as_drift(b) -> DriftFunction:
    return b if isinstance(b, DriftFunction) else DriftFunction(b)


def cn_step(b, t_k, dt, sigma, x, e, tol=1e-12, max_iter=50):
    """Solve ``y = x + dt/2 (b(t_k, x) + b(t_k + dt, y)) + sqrt(dt) sigma e``.

    Picard iteration started from the explicit Euler predictor.  ``x`` is a
    batch of points ``(..., d)``; ``e`` broadcasts against it.  Raises
    :class:`CharacteristicsError` with the first offending point index when
    the residual is still above ``tol`` after ``max_iter`` sweeps.
    """
    if dt <= 0 or tol <= 0:
        raise ValueError("dt and tol must be positive")
    b = _as_drift(b)
    x = np.asarray(x, dtype=float)
    noise = np.sqrt(dt) * sigma * np.asarray(e, dtype=float)
    bx = b(t_k, x)
    base = x + 0.5 * dt * bx + noise
    y = x + dt * bx + noise
    t1 = t_k + dt
    for _ in range(max_iter):
        y_new = base + 0.5 * dt * b(t1, y)
        res = np.abs(y_new - y)
        y = y_new
        if not np.any(res > tol):
            return y
    res = np.abs(base + 0.5 * dt * b(t1, y) - y)
    per_point = np.max(res, axis=-1) if res.ndim else res
    bad = np.flatnonzero(np.ravel(per_point) > tol)
    node = int(bad[0]) if bad.size else None
    raise CharacteristicsError(
        f"characteristic solve did not reach tol={tol} in {max_iter} iterations "
        f"(first offending point {node}); dt may be too large for the drift",
        node=node,
    )


def foot_points(b, t_k, dt, sigma, x, stencil: StochasticStencil, tol=1e-12, max_iter=50):
    """Foot points of all stencil branches: shape ``(3**d,) + x.shape``."""
    x = np.asarray(x, dtype=float)
    return np.stack(
        [cn_step(b, t_k, dt, sigma, x, e, tol, max_iter) for e in stencil.points]
    )


def weak_expectation(b, t_k, dt, sigma, x, phi, stencil: StochasticStencil, tol=1e-12, max_iter=50):
    """One-step weak approximation ``sum_l w_l phi(y_l(x))`` of ``E phi(Y(t_k + dt))``."""
    ys = foot_points(b, t_k, dt, sigma, x, stencil, tol, max_iter)
    vals = np.stack([np.asarray(phi(y), dtype=float) for y in ys])
    return np.tensordot(stencil.weights, vals, axes=1)
