import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfglg.characteristics import (
    CharacteristicsError,
    DriftFunction,
    build_stencil,
    cn_step,
    foot_points,
    weak_expectation,
)

SQ3 = math.sqrt(3.0)


def test_stencil_1d_values():
    s = build_stencil(1)
    assert np.allclose(s.points[:, 0], [-SQ3, 0.0, SQ3])
    assert np.allclose(s.weights, [1 / 6, 2 / 3, 1 / 6])


def test_stencil_2d_center_weight():
    s = build_stencil(2)
    assert len(s) == 9
    center = np.flatnonzero(np.all(s.points == 0.0, axis=1))
    assert s.weights[center[0]] == pytest.approx(4.0 / 9.0)


@pytest.mark.parametrize("d", [1, 2])
def test_stencil_moments_match_gaussian(d):
    s = build_stencil(d)
    gaussian = {0: 1.0, 1: 0.0, 2: 1.0, 3: 0.0, 4: 3.0, 5: 0.0}
    for j in range(d):
        for order, value in gaussian.items():
            assert s.weights @ s.points[:, j] ** order == pytest.approx(value, abs=1e-14)
    if d == 2:  # independence of the components
        assert s.weights @ (s.points[:, 0] ** 2 * s.points[:, 1] ** 2) == pytest.approx(1.0)


def test_stencil_rejects_dimension():
    with pytest.raises(ValueError):
        build_stencil(3)


@given(st.floats(-2, 2), st.floats(0.001, 0.5), st.floats(0, 1), st.sampled_from([-SQ3, 0.0, SQ3]))
def test_cn_zero_drift(x, dt, sigma, e):
    y = cn_step(lambda t, z: np.zeros_like(z), 0.0, dt, sigma, np.array([[x]]), e)
    assert y[0, 0] == pytest.approx(x + math.sqrt(dt) * sigma * e, abs=1e-15)


@given(st.floats(-2, 2), st.floats(-3, 3), st.floats(0.001, 0.5), st.floats(0, 1))
def test_cn_constant_drift(x, c, dt, sigma):
    y = cn_step(lambda t, z: np.full_like(z, c), 0.3, dt, sigma, np.array([[x]]), SQ3)
    assert y[0, 0] == pytest.approx(x + dt * c + math.sqrt(dt) * sigma * SQ3, abs=1e-13)


@given(st.floats(-2, 2), st.floats(-3, 3), st.floats(0.001, 0.2), st.floats(0, 1),
       st.sampled_from([-SQ3, 0.0, SQ3]))
def test_cn_linear_drift_closed_form(x, a, dt, sigma, e):
    y = cn_step(lambda t, z: a * z, 0.0, dt, sigma, np.array([[x]]), e)
    expected = (x + 0.5 * dt * a * x + math.sqrt(dt) * sigma * e) / (1 - 0.5 * a * dt)
    assert y[0, 0] == pytest.approx(expected, abs=1e-12)


def test_cn_residual_below_tol_2d():
    b = lambda t, z: np.stack([np.sin(z[..., 1]) + t, -z[..., 0] ** 3], axis=-1)
    x = np.random.default_rng(0).uniform(-1, 1, size=(200, 2))
    e = np.array([SQ3, -SQ3])
    dt, sigma = 0.05, 0.4
    y = cn_step(b, 0.1, dt, sigma, x, e)
    res = y - x - 0.5 * dt * (b(0.1, x) + b(0.1 + dt, y)) - math.sqrt(dt) * sigma * e
    assert np.max(np.abs(res)) <= 1e-12


def test_cn_iterates_contract():
    lip, dt = 4.0, 0.2  # contraction ratio lip * dt / 2 = 0.4
    seen = []

    def b(t, z):
        if t > 0:
            seen.append(np.array(z))
        return lip * np.sin(z)

    cn_step(DriftFunction(b, lipschitz=lip), 0.0, dt, 0.5, np.linspace(-2, 2, 41)[:, None], SQ3)
    steps = [np.max(np.abs(b1 - b0)) for b0, b1 in zip(seen, seen[1:])]
    ratios = [s1 / s0 for s0, s1 in zip(steps, steps[1:]) if s0 > 1e-13]
    assert ratios and max(ratios) <= lip * dt / 2 + 1e-9


def test_cn_non_convergence_reports_node():
    x = np.array([[0.0], [1.0], [2.0]])
    with pytest.raises(CharacteristicsError) as info:
        cn_step(lambda t, z: 30.0 * np.sin(z) * (z > 0.5), 0.0, 0.5, 0.0, x, 0.0, max_iter=5)
    assert info.value.node in (1, 2)


def test_drift_box_clamps_argument():
    b = DriftFunction(lambda t, z: z, box=(np.array([-1.0]), np.array([1.0])))
    assert np.allclose(b(0.0, np.array([[-3.0], [0.5], [7.0]]))[:, 0], [-1.0, 0.5, 1.0])


def test_weak_expectation_examples():
    s = build_stencil(1)
    zero = lambda t, z: np.zeros_like(z)
    x = np.array([[0.0]])
    assert weak_expectation(zero, 0, 0.1, 0.7, x, lambda y: np.ones(y.shape[:-1]), s)[0] == pytest.approx(1.0)
    assert weak_expectation(zero, 0, 0.1, 0.7, x, lambda y: y[..., 0] ** 2, s)[0] == pytest.approx(0.49 * 0.1)
    assert weak_expectation(zero, 0, 0.1, 1.0, x, lambda y: y[..., 0] ** 4, s)[0] == pytest.approx(3 * 0.01)


def test_foot_points_shape():
    s = build_stencil(2)
    ys = foot_points(lambda t, z: -z, 0.0, 0.1, 0.3, np.zeros((7, 2)), s)
    assert ys.shape == (9, 7, 2)


def test_weak_order_ou():
    """One-step weak error for dX = -X dt + sigma dW decays like dt^3."""
    s = build_stencil(1)
    sigma, x0 = 0.6, 0.8
    x = np.array([[x0]])
    dts = 0.4 / 2.0 ** np.arange(5)
    for k, phi in enumerate((lambda y: y[..., 0], lambda y: y[..., 0] ** 2, lambda y: y[..., 0] ** 3)):
        errs = []
        for dt in dts:
            mean = x0 * math.exp(-dt)
            var = 0.5 * sigma**2 * (1 - math.exp(-2 * dt))
            exact = [mean, mean**2 + var, mean**3 + 3 * mean * var][k]
            errs.append(abs(weak_expectation(lambda t, z: -z, 0.0, dt, sigma, x, phi, s)[0] - exact))
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert rates[-1] >= 2.7, (k, rates)
