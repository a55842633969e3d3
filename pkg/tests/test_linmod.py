import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from predinfer.errors import DimensionMismatch, RankDeficient
from predinfer.linmod import coefficient_se, design_matrix, ols_fit, simple_ols


def test_exact_line_has_zero_residuals_and_se():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    fit = ols_fit(X, [1.0, 3.0, 5.0])
    np.testing.assert_allclose(fit.beta, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-12)
    assert coefficient_se(fit, 1, "model") == pytest.approx(0.0, abs=1e-12)


def test_two_points_interpolate():
    fit = ols_fit([[1.0, 0.0], [1.0, 1.0]], [0.0, 1.0])
    np.testing.assert_allclose(fit.beta, [0.0, 1.0], atol=1e-12)
    assert np.isnan(fit.sigma2_hat)


def test_matches_normal_equations():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 3))
    y = rng.standard_normal(50)
    expected = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(ols_fit(X, y).beta, expected, atol=1e-10)


def test_covariances_against_explicit_formulas():
    rng = np.random.default_rng(1)
    X = design_matrix(rng.standard_normal((40, 2)))
    y = X @ [0.5, 1.0, -2.0] + rng.standard_normal(40) * (1 + np.abs(X[:, 1]))
    fit = ols_fit(X, y)
    inv = np.linalg.inv(X.T @ X)
    r = y - X @ inv @ X.T @ y
    np.testing.assert_allclose(fit.model_cov, r @ r / 37 * inv, rtol=1e-10)
    meat = (X * r[:, None] ** 2).T @ X
    np.testing.assert_allclose(fit.sandwich_cov, inv @ meat @ inv, rtol=1e-10)
    for cov in (fit.model_cov, fit.sandwich_cov):
        np.testing.assert_allclose(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() >= -1e-12


def test_residuals_orthogonal_to_design():
    rng = np.random.default_rng(2)
    X = design_matrix(rng.standard_normal((100, 3)))
    y = rng.standard_normal(100)
    fit = ols_fit(X, y)
    bound = 1e-8 * np.linalg.norm(X) * np.linalg.norm(y)
    assert np.max(np.abs(X.T @ fit.residuals)) <= bound


def test_model_se_close_to_closed_form():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(200)
    y = 1.0 + 2.0 * x + rng.standard_normal(200)
    se = ols_fit(design_matrix(x), y).se(1)
    target = 1.0 / np.sqrt(np.sum((x - x.mean()) ** 2))
    assert abs(se / target - 1) < 0.3


def test_sandwich_tracks_model_se_under_homoskedasticity():
    rng = np.random.default_rng(4)
    model, sandwich = [], []
    for _ in range(200):
        x = rng.standard_normal(500)
        fit = ols_fit(design_matrix(x), x + rng.standard_normal(500))
        model.append(fit.se(1, "model"))
        sandwich.append(fit.se(1, "sandwich"))
    assert 0.9 <= np.mean(sandwich) / np.mean(model) <= 1.1


def test_rank_deficiency_detected():
    x = np.arange(10.0)
    X = np.column_stack([np.ones(10), x, 2 * x + 1])
    with pytest.raises(RankDeficient):
        ols_fit(X, x)
    with pytest.raises(RankDeficient):
        ols_fit(design_matrix(np.ones(5)), np.arange(5.0))


def test_dimension_errors():
    with pytest.raises(DimensionMismatch):
        ols_fit(np.ones((5, 2)), np.ones(4))
    with pytest.raises(DimensionMismatch):
        ols_fit(np.ones((1, 2)), np.ones(1))
    fit = ols_fit(design_matrix(np.arange(4.0)), np.array([0.0, 1.0, 1.0, 3.0]))
    with pytest.raises(IndexError):
        fit.se(2)
    with pytest.raises(ValueError):
        fit.se(1, "robust")


def test_simple_ols_batches_agree_with_ols_fit():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 25))
    y = 2 * x + rng.standard_normal((3, 25))
    b0, b1, se = simple_ols(x, y)
    for k in range(3):
        fit = ols_fit(design_matrix(x[k]), y[k])
        np.testing.assert_allclose([b0[k], b1[k], se[k]], [*fit.beta, fit.se(1)], rtol=1e-10)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _well_posed(X):
    return np.linalg.cond(X) < 1e6


@given(arrays(float, (12, 3), elements=finite), arrays(float, 3, elements=finite))
def test_refit_of_fitted_values_is_exact(X, beta):
    if not _well_posed(X):
        return
    fit = ols_fit(X, X @ beta)
    scale = 1 + np.abs(beta).max()
    np.testing.assert_allclose(fit.beta, beta, atol=1e-10 * scale * np.linalg.cond(X))
    assert np.max(np.abs(fit.residuals)) <= 1e-9 * scale * (1 + np.abs(X).max())


@given(arrays(float, 15, elements=finite), arrays(float, 15, elements=finite),
       st.floats(0.1, 5) | st.floats(-5, -0.1), finite)
def test_affine_response_scales_slope_and_keeps_t(x, y, a, b):
    X = design_matrix(x)
    if not _well_posed(X) or np.ptp(y) < 1e-3:
        return
    base, moved = ols_fit(X, y), ols_fit(X, a * y + b)
    assert moved.beta[1] == pytest.approx(a * base.beta[1], rel=1e-8, abs=1e-8)
    if base.se(1) > 1e-6:
        # a negative scale flips the sign of t but not its size
        t_base = np.sign(a) * base.beta[1] / base.se(1)
        assert moved.beta[1] / moved.se(1) == pytest.approx(t_base, rel=1e-6, abs=1e-8)
