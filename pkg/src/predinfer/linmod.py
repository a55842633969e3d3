"""Dense least squares with model-based and sandwich covariance estimates.

Every estimator in the package reduces to one or more calls to
:func:`ols_fit`. The solve goes through a column-pivoted QR factorization so
that near-singular designs are detected instead of silently inverted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, RankDeficient

RANK_TOL = 1e-10


@dataclass(frozen=True)
class FittedLinearModel:
    beta: np.ndarray
    residuals: np.ndarray
    model_cov: np.ndarray
    sandwich_cov: np.ndarray
    sigma2_hat: float

    @property
    def n_obs(self) -> int:
        return self.residuals.shape[0]

    def se(self, j: int, mode: str = "model") -> float:
        return coefficient_se(self, j, mode)


def design_matrix(x, intercept: bool = True) -> np.ndarray:
    """Stack ``x`` (vector or matrix) into a design, optionally prefixed by a ones column."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if intercept:
        return np.column_stack([np.ones(x.shape[0]), x])
    return x


def _check_design(X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2:
        raise DimensionMismatch(f"design must be 2-d, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(
            f"response length {y.shape} does not match design rows {X.shape[0]}"
        )
    n, p = X.shape
    if n < p:
        raise DimensionMismatch(f"need at least as many rows as columns, got {n}x{p}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("design and response must be finite")


def ols_fit(X, y) -> FittedLinearModel:
    """Least-squares fit of ``y`` on the columns of ``X``.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Design matrix. Include a ones column explicitly if an intercept is wanted.
    y : array_like, shape (n,)
        Response.

    Returns
    -------
    FittedLinearModel
        ``model_cov`` is ``sigma2_hat * (X'X)^-1`` with ``sigma2_hat = RSS / (n - p)``;
        ``sandwich_cov`` is the HC0 estimator ``(X'X)^-1 (sum r_i^2 x_i x_i') (X'X)^-1``.

    Raises
    ------
    RankDeficient
        If a pivot of the QR factor falls below ``1e-10`` times the largest one.
    DimensionMismatch
        On inconsistent shapes or ``n < p``. With ``n == p`` the fit
        interpolates and ``sigma2_hat`` (hence ``model_cov``) is NaN.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_design(X, y)
    n, p = X.shape

    Q, R, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0 or np.any(diag < RANK_TOL * diag[0]):
        raise RankDeficient(f"design is (numerically) rank deficient: pivots {diag}")

    coef_piv = sla.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = coef_piv
    residuals = y - X @ beta

    r_inv = sla.solve_triangular(R, np.eye(p))
    xtx_inv = np.empty((p, p))
    xtx_inv[np.ix_(piv, piv)] = r_inv @ r_inv.T

    # a square design interpolates exactly and leaves no degrees of freedom for sigma^2
    sigma2_hat = float(residuals @ residuals) / (n - p) if n > p else float("nan")
    model_cov = sigma2_hat * xtx_inv

    # rows of X (X'X)^-1 scaled by residuals give the HC0 sandwich directly
    H = (X @ xtx_inv) * residuals[:, None]
    sandwich_cov = H.T @ H
    sandwich_cov = 0.5 * (sandwich_cov + sandwich_cov.T)

    return FittedLinearModel(
        beta=beta,
        residuals=residuals,
        model_cov=model_cov,
        sandwich_cov=sandwich_cov,
        sigma2_hat=sigma2_hat,
    )


def coefficient_se(model: FittedLinearModel, j: int, mode: str = "model") -> float:
    """Standard error of coefficient ``j`` from the model or sandwich covariance."""
    p = model.beta.shape[0]
    if not 0 <= j < p:
        raise IndexError(f"coefficient index {j} out of range for {p} coefficients")
    if mode == "model":
        cov = model.model_cov
    elif mode == "sandwich":
        cov = model.sandwich_cov
    else:
        raise ValueError(f"unknown SE mode {mode!r}")
    return float(np.sqrt(max(cov[j, j], 0.0)))


def simple_ols(x, y):
    """Closed-form slope fit of ``y`` on ``(1, x)`` along the last axis.

    Batched companion to :func:`ols_fit` for the bootstrap inner loop, where
    thousands of two-column fits are needed. Accepts ``(n,)`` or ``(B, n)``
    arrays and returns ``(intercept, slope, slope_model_se)`` with matching
    leading shape. Works from raw cross-product sums, so callers should pass
    roughly centered data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    if y.shape != x.shape:
        raise DimensionMismatch(f"shape mismatch {x.shape} vs {y.shape}")
    if n <= 2:
        raise DimensionMismatch("need at least 3 observations for a slope SE")
    sx = x.sum(axis=-1)
    sy = y.sum(axis=-1)
    cxx = np.einsum("...i,...i->...", x, x) - sx * sx / n
    cxy = np.einsum("...i,...i->...", x, y) - sx * sy / n
    cyy = np.einsum("...i,...i->...", y, y) - sy * sy / n
    if np.any(cxx <= 0.0):
        raise RankDeficient("covariate has zero variance")
    slope = cxy / cxx
    rss = np.maximum(cyy - slope * cxy, 0.0)
    se = np.sqrt(rss / (n - 2) / cxx)
    intercept = (sy - slope * sx) / n
    return intercept, slope, se
