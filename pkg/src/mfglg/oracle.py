"""Closed-form solution of the linear-quadratic MFG with nonlocal mean coupling.

System: ``-v_t - (s^2/2) Lap v + |grad v|^2 / 2 = |x - mean(m(t))|^2 / 2``,
``m_t - (s^2/2) Lap m - div(grad v m) = 0``, ``v(T) = 0`` and Gaussian
``m(0)`` with mean ``mu0`` and diagonal covariance ``Sigma0``.  The mean stays
at ``mu0``, ``grad v = Pi(t) (x - mu0)`` and the marginal variances follow a
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LQParameters:
    T: float = 0.25
    sigma: float = np.sqrt(0.1)
    dim: int = 1
    mu0: tuple = field(default=(0.0,))
    sigma0: tuple = field(default=(0.1,))  # diagonal of the initial covariance

    def __post_init__(self):
        mu0 = tuple(float(v) for v in np.broadcast_to(self.mu0, (self.dim,)))
        s0 = tuple(float(v) for v in np.broadcast_to(self.sigma0, (self.dim,)))
        if any(v <= 0 for v in s0):
            raise ValueError("initial variances must be positive")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", s0)

    @property
    def second_moments(self) -> np.ndarray:
        mu = np.asarray(self.mu0)
        return np.asarray(self.sigma0) + mu**2


def riccati_pi(t, T):
    """Scalar factor of ``Pi(t) = (e^{2T-t} - e^t) / (e^{2T-t} + e^t) I``."""
    t = np.asarray(t, dtype=float)
    a, b = np.exp(2 * T - t), np.exp(t)
    out = (a - b) / (a + b)
    return out if out.ndim else float(out)


def offset_s(t, params: LQParameters) -> np.ndarray:
    return -np.multiply.outer(riccati_pi(t, params.T), np.asarray(params.mu0))


def constant_c(t, params: LQParameters):
    T, sig, d = params.T, params.sigma, params.dim
    t = np.asarray(t, dtype=float)
    mu2 = float(np.dot(params.mu0, params.mu0))
    log_term = np.log(2 * np.exp(T) / (np.exp(2 * T - t) + np.exp(t)))
    out = 0.5 * riccati_pi(t, T) * mu2 - 0.5 * sig**2 * d * log_term
    return out if np.ndim(out) else float(out)


def mean_position(t, params: LQParameters) -> np.ndarray:
    return np.broadcast_to(np.asarray(params.mu0), np.shape(t) + (params.dim,)).copy()


def variance(t, params: LQParameters) -> np.ndarray:
    """Marginal variances ``Sigma(t)_ii``, shape ``shape(t) + (d,)``."""
    T, sig = params.T, params.sigma
    t = np.asarray(t, dtype=float)[..., None]
    mu = np.asarray(params.mu0)
    m2 = params.second_moments
    e2T = np.exp(2 * T)
    bracket = (2 * m2 - 2 * mu**2 + sig**2 * (e2T + 1)) / (2 * (e2T + 1) ** 2) - sig**2 / (
        2 * (e2T + np.exp(2 * t))
    )
    return (np.exp(2 * T - t) + np.exp(t)) ** 2 * bracket


def exact_value(t, x, params: LQParameters):
    """``v*(t, x) = <Pi x, x>/2 + <s, x> + c``; ``x`` has shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    pi = riccati_pi(t, params.T)
    s = -pi * np.asarray(params.mu0)
    out = 0.5 * pi * np.sum(x * x, axis=-1) + x @ s + constant_c(t, params)
    return out if np.ndim(out) else float(out)


def exact_gradient(t, x, params: LQParameters) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    pi = riccati_pi(t, params.T)
    return pi * (x - np.asarray(params.mu0))


def exact_density(t, x, params: LQParameters):
    """Product of univariate Gaussians with mean ``mu0`` and variance ``Sigma(t)``."""
    x = np.asarray(x, dtype=float)
    var = variance(t, params)
    z = (x - np.asarray(params.mu0)) ** 2 / var
    out = np.prod(np.exp(-0.5 * z) / np.sqrt(2 * np.pi * var), axis=-1)
    return out if np.ndim(out) else float(out)


def exact_mean_field_cost(t, x, params: LQParameters):
    """Running cost ``|x - mean(m*(t))|^2 / 2`` along the exact solution."""
    x = np.asarray(x, dtype=float)
    return 0.5 * np.sum((x - np.asarray(params.mu0)) ** 2, axis=-1)


def ou_density(t, x, mu0=0.0, var0=0.1, sigma=np.sqrt(0.1)):
    """Law at time ``t`` of ``dX = -X dt + sigma dW`` from a Gaussian ``N(mu0, var0)``
    (1-D, ``x`` a plain array of coordinates)."""
    x = np.asarray(x, dtype=float)
    decay = np.exp(-2.0 * t)
    var = var0 * decay + 0.5 * sigma**2 * (1.0 - decay)
    mean = mu0 * np.exp(-t)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)
