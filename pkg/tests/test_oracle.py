import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp, trapezoid

from mfglg.oracle import (
    LQParameters,
    constant_c,
    exact_density,
    exact_gradient,
    exact_mean_field_cost,
    exact_value,
    mean_position,
    ou_density,
    riccati_pi,
    variance,
)

P1 = LQParameters(T=0.25, sigma=math.sqrt(0.1))


def _rk4(f, y0, t):
    y = [np.asarray(y0, dtype=float)]
    for a, b in zip(t, t[1:]):
        h = b - a
        k1 = f(a, y[-1])
        k2 = f(a + h / 2, y[-1] + h / 2 * k1)
        k3 = f(a + h / 2, y[-1] + h / 2 * k2)
        k4 = f(b, y[-1] + h * k3)
        y.append(y[-1] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    return np.array(y)


def test_riccati_endpoints():
    assert riccati_pi(0.25, 0.25) == 0.0
    assert riccati_pi(0.0, 0.25) == pytest.approx(math.tanh(0.25), abs=1e-15)


@given(st.floats(0.05, 2.0))
def test_riccati_residual(T):
    t = np.linspace(0, T, 101)
    h = 1e-5
    dpi = (riccati_pi(t + h, T) - riccati_pi(t - h, T)) / (2 * h)
    assert np.max(np.abs(-dpi + riccati_pi(t, T) ** 2 - 1.0)) <= 1e-6


@pytest.mark.parametrize("mu0,s0,sig", [(0.0, 0.1, math.sqrt(0.1)), (0.3, 0.05, 0.2), (-0.5, 0.2, 0.6)])
def test_variance_matches_moment_ode(mu0, s0, sig):
    p = LQParameters(T=0.5, sigma=sig, mu0=(mu0,), sigma0=(s0,))
    t = np.linspace(0, p.T, 2001)
    # d Sigma / dt = -2 Pi Sigma + sigma^2 along the optimal drift -Pi (x - mu0)
    ode = _rk4(lambda tt, m: -2 * riccati_pi(tt, p.T) * m + sig**2, [s0], t)[:, 0]
    assert np.max(np.abs(ode - variance(t, p)[:, 0])) <= 1e-8
    sol = solve_ivp(lambda tt, m: -2 * riccati_pi(tt, p.T) * m + sig**2, (0, p.T), [s0], rtol=1e-12, atol=1e-14)
    assert abs(sol.y[0, -1] - variance(p.T, p)[0]) <= 1e-8


def test_terminal_value_and_mean():
    x = np.linspace(-2, 2, 9)[:, None]
    assert np.allclose(exact_value(P1.T, x, P1), 0.0, atol=1e-15)
    p = LQParameters(T=0.25, sigma=0.3, mu0=(0.4,))
    assert np.allclose(exact_gradient(0.1, np.array([[0.4]]), p), 0.0)
    assert np.allclose(mean_position(np.linspace(0, 0.25, 4), p), 0.4)
    assert exact_mean_field_cost(0.0, np.array([0.4]), p) == 0.0


@pytest.mark.parametrize("dim", [1, 2])
def test_density_mass_and_moments(dim):
    p = LQParameters(T=0.25, sigma=math.sqrt(0.1), dim=dim, mu0=(0.2,) * dim)
    for t in (0.0, 0.1, 0.25):
        if dim == 1:
            mass = quad(lambda y: exact_density(t, np.array([y]), p), -6, 6, epsabs=1e-13)[0]
            var = quad(lambda y: (y - 0.2) ** 2 * exact_density(t, np.array([y]), p), -6, 6, epsabs=1e-13)[0]
            assert var == pytest.approx(variance(t, p)[0], rel=1e-9)
        else:
            ax = np.linspace(-4, 4, 801)
            X = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
            mass = trapezoid(trapezoid(exact_density(t, X, p), ax), ax)
        assert mass == pytest.approx(1.0, abs=1e-8)


def _pde_residuals(t, x, p, h=1e-4):
    s2 = p.sigma**2 / 2
    v = lambda tt, xx: exact_value(tt, xx[..., None], p)
    m = lambda tt, xx: exact_density(tt, xx[..., None], p)
    v_t = (v(t + h, x) - v(t - h, x)) / (2 * h)
    v_x = (v(t, x + h) - v(t, x - h)) / (2 * h)
    v_xx = (v(t, x + h) - 2 * v(t, x) + v(t, x - h)) / h**2
    hjb = -v_t - s2 * v_xx + 0.5 * v_x**2 - 0.5 * (x - p.mu0[0]) ** 2
    flux = lambda xx: exact_gradient(t, xx[..., None], p)[..., 0] * m(t, xx)
    m_t = (m(t + h, x) - m(t - h, x)) / (2 * h)
    m_xx = (m(t, x + h) - 2 * m(t, x) + m(t, x - h)) / h**2
    fp = m_t - s2 * m_xx - (flux(x + h) - flux(x - h)) / (2 * h)
    return np.max(np.abs(hjb)), np.max(np.abs(fp))


@pytest.mark.parametrize("mu0", [0.0, 0.3])
def test_pde_residuals(mu0):
    p = LQParameters(T=0.25, sigma=math.sqrt(0.1), mu0=(mu0,))
    x = np.linspace(-1.5, 1.5, 31)
    for t in (0.02, 0.1, 0.2):
        hjb, fp = _pde_residuals(t, x, p)
        assert hjb <= 1e-4
        assert fp <= 1e-4


def test_constant_c_terminal_and_derivative():
    assert constant_c(P1.T, P1) == pytest.approx(0.0, abs=1e-15)
    # c' = -sigma^2/2 * d * Pi when mu0 = 0
    t, h = 0.1, 1e-5
    dc = (constant_c(t + h, P1) - constant_c(t - h, P1)) / (2 * h)
    assert dc == pytest.approx(-0.5 * P1.sigma**2 * riccati_pi(t, P1.T), rel=1e-7)


def test_parameters_validation():
    with pytest.raises(ValueError):
        LQParameters(sigma0=(0.0,))
    p = LQParameters(dim=2, mu0=0.1, sigma0=0.2)
    assert p.mu0 == (0.1, 0.1) and p.sigma0 == (0.2, 0.2)


@given(st.floats(0, 2), st.floats(-1, 1), st.floats(0.01, 0.5))
def test_ou_density_moments(t, mu0, var0):
    x = np.linspace(-8, 8, 8001)
    m = ou_density(t, x, mu0, var0, 0.4)
    assert trapezoid(m, x) == pytest.approx(1.0, abs=1e-8)
    assert trapezoid(x * m, x) == pytest.approx(mu0 * math.exp(-t), abs=1e-8)
    var = var0 * math.exp(-2 * t) + 0.08 * (1 - math.exp(-2 * t))
    assert trapezoid((x - mu0 * math.exp(-t)) ** 2 * m, x) == pytest.approx(var, rel=1e-6)
