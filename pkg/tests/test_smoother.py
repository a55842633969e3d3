import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from predinfer.datagen import GenConfig, generate
from predinfer.errors import DegenerateInput, TooFewPoints
from predinfer.smoother import (
    SmootherConfig,
    fit_additive,
    fit_spline,
    predict_additive,
    predict_spline,
)


def test_identity_is_reproduced():
    x = np.linspace(0, 1, 100)
    s = fit_spline(x, x)
    assert np.max(np.abs(s.predict(x) - x)) < 1e-3
    assert s.resid_sd < 1e-3


def test_constant_response():
    x = np.random.default_rng(0).uniform(-2, 2, 60)
    s = fit_spline(x, np.full(60, 3.5))
    np.testing.assert_allclose(s.predict(np.linspace(-5, 5, 11)), 3.5, atol=1e-8)
    assert s.resid_sd == pytest.approx(0.0, abs=1e-8)


def test_recovers_sine_curve():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, 500)
    y = np.sin(2 * np.pi * x) + 0.1 * rng.standard_normal(500)
    s = fit_spline(x, y)
    assert np.mean((s.predict(x) - np.sin(2 * np.pi * x)) ** 2) < 0.02
    assert not s.lambda_on_edge


def test_training_predictions_match_reported_residual_scale():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(200)
    y = np.cos(x) + 0.3 * rng.standard_normal(200)
    s = fit_spline(x, y)
    rss = np.sum((y - predict_spline(s, x)) ** 2)
    assert s.resid_sd == pytest.approx(np.sqrt(rss / (200 - s.edf)), rel=1e-8)
    assert 1 < s.edf < 14


def test_tangent_extrapolation_matches_numeric_boundary_slope():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 2, 300)
    s = fit_spline(x, np.exp(x) + 0.05 * rng.standard_normal(300))
    lo, hi = s.x_range
    h = 1e-6
    slope_lo = (s.predict(lo + h) - s.predict(lo)) / h
    slope_hi = (s.predict(hi) - s.predict(hi - h)) / h
    for dx in (0.5, 3.0):
        assert s.predict(hi + dx) == pytest.approx(s.predict(hi) + dx * slope_hi, abs=1e-4)
        assert s.predict(lo - dx) == pytest.approx(s.predict(lo) - dx * slope_lo, abs=1e-4)


def test_knots_and_smoothness():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(150)
    s = fit_spline(x, np.sin(2 * x) + 0.2 * rng.standard_normal(150))
    distinct = np.unique(s.knots)
    assert np.all(np.diff(distinct) > 0)
    assert distinct.size == 10 + 2
    # second derivative is continuous: no jump across any interior knot
    d2 = s._spline.derivative(2)
    for k in distinct[1:-1]:
        assert d2(k - 1e-9) == pytest.approx(d2(k + 1e-9), abs=1e-5)


def test_input_errors():
    with pytest.raises(TooFewPoints):
        fit_spline(np.arange(9.0), np.arange(9.0))
    with pytest.raises(DegenerateInput):
        fit_spline(np.ones(20), np.arange(20.0))


def test_lambda_grid():
    grid = SmootherConfig().lambda_grid()
    assert grid.size == 21
    assert grid[0] == pytest.approx(1e-6) and grid[-1] == pytest.approx(1e4)


def test_additive_recovers_single_linear_signal():
    rng = np.random.default_rng(5)
    Z = rng.standard_normal((1000, 3))
    m = fit_additive(Z, 2.0 * Z[:, 0])
    comps = m.components(Z)
    assert np.max(np.abs(comps[:, 1:])) < 0.05
    np.testing.assert_allclose(comps[:, 0], 2.0 * (Z[:, 0] - Z[:, 0].mean()), atol=1e-6)
    assert m.converged


def test_additive_null_components_stay_small_under_noise():
    rng = np.random.default_rng(5)
    Z = rng.standard_normal((1000, 3))
    m = fit_additive(Z, 2.0 * Z[:, 0] + 0.1 * rng.standard_normal(1000))
    # the far tails carry few points, so bound the bulk of each null component
    assert np.percentile(np.abs(m.components(Z)[:, 1:]), 99) < 0.05


def test_additive_constant_response():
    Z = np.random.default_rng(6).standard_normal((50, 4))
    m = fit_additive(Z, np.full(50, -1.25))
    assert m.intercept == pytest.approx(-1.25)
    np.testing.assert_allclose(m.components(Z), 0.0, atol=1e-10)
    np.testing.assert_allclose(predict_additive(m, Z[:5] * 3), -1.25, atol=1e-10)


def test_additive_pure_noise_cannot_beat_null_loss_badly():
    rng = np.random.default_rng(7)
    Z = rng.standard_normal((500, 4))
    y = rng.standard_normal(500)
    m = fit_additive(Z, y)
    assert np.mean((y - m.predict(Z)) ** 2) <= np.var(y)


def test_additive_prediction_is_sum_of_components():
    d = generate(GenConfig(300, 1.0, seed=11))
    m = fit_additive(d.Z, d.y)
    Z_new = np.random.default_rng(8).standard_normal((40, 4)) * 1.5
    manual = m.intercept + sum(s.predict(Z_new[:, j]) for j, s in enumerate(m.smoothers))
    np.testing.assert_allclose(m.predict(Z_new), manual, rtol=1e-12, atol=1e-12)


def test_components_centered_on_training_data():
    d = generate(GenConfig(300, 0.0, seed=12))
    m = fit_additive(d.Z, d.y)
    means = np.abs(m.components(d.Z).mean(axis=0))
    assert np.all(means < 1e-8 * d.y.std())
    assert m.n_backfit_iters <= SmootherConfig().max_backfit_iters


@pytest.mark.parametrize("seed", [301, 302, 303])
def test_gcv_interior_for_nonlinear_components(seed):
    d = generate(GenConfig(300, 1.0, seed=seed))
    m = fit_additive(d.Z, d.y)
    assert not any(s.lambda_on_edge for s in m.smoothers[1:])
    first = m.smoothers[0]
    if first.lambda_on_edge:
        # only the linear limit is acceptable at the edge
        z = np.linspace(-2, 2, 9)
        assert np.max(np.abs(np.diff(first.predict(z), 2))) < 1e-3


def test_backfitting_objective_never_increases_at_fixed_penalties():
    d = generate(GenConfig(300, 1.0, seed=13))
    free = fit_additive(d.Z, d.y)
    fixed = fit_additive(d.Z, d.y, lambdas=[s.penalty_lambda for s in free.smoothers])
    obj = np.array(fixed.objective_trace)
    assert np.all(np.diff(obj) <= 1e-9 * obj[0])
    assert free.rss_trace[-1] <= free.rss_trace[0] * (1 + 1e-9)


@settings(max_examples=25)
@given(st.floats(-100, 100), st.floats(0.01, 100), st.integers(0, 2**32 - 1))
def test_affine_response_equivariance(shift, scale, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(80)
    y = np.sin(x) + 0.3 * rng.standard_normal(80)
    base, moved = fit_spline(x, y), fit_spline(x, scale * y + shift)
    assert moved.penalty_lambda == base.penalty_lambda
    grid = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(moved.predict(grid), scale * base.predict(grid) + shift,
                               rtol=1e-7, atol=1e-7 * (abs(shift) + scale))
