"""Penalized cubic B-spline smoother and a backfitted additive model.

The smoother places interior knots at empirical quantiles, penalizes squared
second differences of the basis coefficients, and picks the penalty weight by
generalized cross-validation (GCV) over a log-spaced grid. The additive model
cycles that smoother over the predictor coordinates.

All fitting is deterministic: a fixed training set always produces the same
fitted object.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import BSpline

from .errors import DegenerateInput, DimensionMismatch, TooFewPoints

logger = logging.getLogger(__name__)

DEGREE = 3


@dataclass(frozen=True)
class SmootherConfig:
    n_interior_knots: int = 10
    log10_lambda_min: float = -6.0
    log10_lambda_max: float = 4.0
    n_lambda: int = 21
    # decades added on the offending side when GCV lands on the grid edge
    widen_decades: float = 4.0
    min_points: int = 10
    max_backfit_iters: int = 50
    backfit_tol: float = 1e-6

    def lambda_grid(self) -> np.ndarray:
        return np.logspace(self.log10_lambda_min, self.log10_lambda_max, self.n_lambda)


DEFAULT_CONFIG = SmootherConfig()


@dataclass(frozen=True)
class SplineSmoother:
    """A fitted univariate smoother.

    ``knots`` is the full clamped knot vector (boundary knots repeated
    ``DEGREE + 1`` times). Outside ``x_range`` predictions follow the tangent
    line at the nearest boundary.
    """

    knots: np.ndarray
    basis_coefs: np.ndarray
    penalty_lambda: float
    x_range: tuple[float, float]
    resid_sd: float
    edf: float = float("nan")
    gcv: float = float("nan")
    lambda_on_edge: bool = False

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(self.knots, self.basis_coefs, DEGREE, extrapolate=False)

    @cached_property
    def _boundary(self) -> tuple[float, float, float, float]:
        lo, hi = self.x_range
        d1 = self._spline.derivative(1)
        # evaluate derivatives just inside the closed interval
        return (
            float(self._spline(lo)),
            float(d1(lo)),
            float(self._spline(hi)),
            float(d1(hi)),
        )

    def predict(self, x_new) -> np.ndarray:
        x_new = np.asarray(x_new, dtype=float)
        lo, hi = self.x_range
        out = np.asarray(self._spline(x_new), dtype=float)
        below = x_new < lo
        above = x_new > hi
        if below.any() or above.any():
            f_lo, d_lo, f_hi, d_hi = self._boundary
            out = np.where(below, f_lo + d_lo * (x_new - lo), out)
            out = np.where(above, f_hi + d_hi * (x_new - hi), out)
        return out

    def shifted(self, delta: float) -> "SplineSmoother":
        """Same smoother with ``delta`` added to every prediction.

        B-spline bases form a partition of unity, so adding a constant to all
        coefficients adds that constant to the function.
        """
        return SplineSmoother(
            knots=self.knots,
            basis_coefs=self.basis_coefs + delta,
            penalty_lambda=self.penalty_lambda,
            x_range=self.x_range,
            resid_sd=self.resid_sd,
            edf=self.edf,
            gcv=self.gcv,
            lambda_on_edge=self.lambda_on_edge,
        )


def _knot_vector(x: np.ndarray, n_interior: int) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.unique(np.quantile(x, probs))
    interior = interior[(interior > lo) & (interior < hi)]
    return np.concatenate([np.repeat(lo, DEGREE + 1), interior, np.repeat(hi, DEGREE + 1)])


def _basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    return BSpline.design_matrix(x, knots, DEGREE).toarray()


class _Fit(NamedTuple):
    coefs: np.ndarray
    fitted: np.ndarray
    lam: float
    edf: float
    rss: float
    gcv: float
    on_edge: bool
    roughness: float


class _PenalizedBasis:
    """Precomputed eigen-decomposition of one coordinate's penalized problem.

    With ``B'B = L L'`` and ``L^-1 D'D L^-T = U diag(s) U'``, the columns of
    ``Q = B L^-T U`` are orthonormal and the smoother for weight ``lam`` is
    ``Q diag(1 / (1 + lam s)) Q'``. This makes GCV over the whole grid a
    couple of matrix-vector products, which matters inside backfitting.
    """

    def __init__(self, x: np.ndarray, config: SmootherConfig):
        self.x = x
        self.config = config
        self.knots = _knot_vector(x, config.n_interior_knots)
        B = _basis(x, self.knots)
        k = B.shape[1]
        D = np.diff(np.eye(k), 2, axis=0)
        G = B.T @ B
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            L = np.linalg.cholesky(G + 1e-10 * np.trace(G) / k * np.eye(k))
        L_inv = sla.solve_triangular(L, np.eye(k), lower=True)
        s, U = np.linalg.eigh(L_inv @ (D.T @ D) @ L_inv.T)
        self.s = np.clip(s, 0.0, None)
        self.A = L_inv.T @ U
        self.Q = B @ self.A

    def _select(self, a: np.ndarray, rss_perp: float, grid: np.ndarray):
        n = self.x.shape[0]
        shrink = 1.0 / (1.0 + np.outer(grid, self.s))
        edf = shrink.sum(axis=1)
        rss = rss_perp + ((a * (1.0 - shrink)) ** 2).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gcv = n * rss / (n - edf) ** 2
        best = int(np.argmin(gcv))
        return best, edf, rss, gcv

    def fit(self, y: np.ndarray, lam: float | None = None) -> _Fit:
        """Penalized fit of ``y``; ``lam=None`` selects the weight by GCV."""
        cfg = self.config
        a = self.Q.T @ y
        resid_perp = y - self.Q @ a
        rss_perp = float(resid_perp @ resid_perp)

        grid = cfg.lambda_grid() if lam is None else np.array([float(lam)])
        best, edf, rss, gcv = self._select(a, rss_perp, grid)
        on_edge = lam is None and best in (0, grid.size - 1)
        if on_edge and cfg.widen_decades > 0:
            n_extra = max(1, int(round(cfg.widen_decades * (cfg.n_lambda - 1)
                                       / (cfg.log10_lambda_max - cfg.log10_lambda_min))))
            if best == 0:
                lo = cfg.log10_lambda_min
                extra = np.logspace(lo - cfg.widen_decades, lo, n_extra + 1)[:-1]
                grid = np.concatenate([extra, grid])
            else:
                hi = cfg.log10_lambda_max
                extra = np.logspace(hi, hi + cfg.widen_decades, n_extra + 1)[1:]
                grid = np.concatenate([grid, extra])
            best, edf, rss, gcv = self._select(a, rss_perp, grid)
            on_edge = best in (0, grid.size - 1)
            exact = rss[best] <= 1e-20 * float(y @ y)
            if on_edge and best == 0 and not exact:
                logger.warning("GCV keeps choosing the smallest penalty (lambda=%g); "
                               "the fit is close to interpolating", grid[best])
            elif on_edge:
                # the infinite-penalty limit is the linear fit, a legitimate answer
                logger.debug("GCV optimum at the linear limit: lambda=%g", grid[best])

        lam = float(grid[best])
        w = a / (1.0 + lam * self.s)
        return _Fit(
            coefs=self.A @ w,
            fitted=self.Q @ w,
            lam=lam,
            edf=float(edf[best]),
            rss=float(rss[best]),
            gcv=float(gcv[best]),
            on_edge=bool(on_edge),
            # ||D c||^2 in the rotated coordinates
            roughness=float(self.s @ (w * w)),
        )


def _validate_xy(x, y, config: SmootherConfig):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.shape != x.shape:
        raise DimensionMismatch(f"x and y must be equal-length vectors, got {x.shape}, {y.shape}")
    if x.shape[0] < config.min_points:
        raise TooFewPoints(f"need at least {config.min_points} points, got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("smoother inputs must be finite")
    if np.ptp(x) == 0.0:
        raise DegenerateInput("x has zero variance")
    return x, y


def _make_smoother(basis: _PenalizedBasis, y: np.ndarray, lam: float | None = None):
    fit = basis.fit(y, lam)
    n = y.shape[0]
    resid_sd = float(np.sqrt(max(fit.rss, 0.0) / (n - fit.edf))) if n > fit.edf else 0.0
    smoother = SplineSmoother(
        knots=basis.knots,
        basis_coefs=fit.coefs,
        penalty_lambda=fit.lam,
        x_range=(float(basis.x.min()), float(basis.x.max())),
        resid_sd=resid_sd,
        edf=fit.edf,
        gcv=fit.gcv,
        lambda_on_edge=fit.on_edge,
    )
    return smoother, fit


def fit_spline(x, y, config: SmootherConfig | None = None) -> SplineSmoother:
    """Fit a GCV-tuned penalized cubic spline of ``y`` on ``x``.

    Raises ``TooFewPoints`` below ``config.min_points`` observations and
    ``DegenerateInput`` when ``x`` is constant.
    """
    config = config or DEFAULT_CONFIG
    x, y = _validate_xy(x, y, config)
    smoother, _ = _make_smoother(_PenalizedBasis(x, config), y)
    return smoother


def predict_spline(s: SplineSmoother, x_new) -> np.ndarray:
    return s.predict(x_new)


@dataclass(frozen=True)
class AdditiveModel:
    intercept: float
    smoothers: tuple[SplineSmoother, ...]
    converged: bool
    n_backfit_iters: int
    # per-sweep training RSS and penalized objective RSS + sum_j lambda_j ||D c_j||^2
    rss_trace: tuple[float, ...] = field(default=(), repr=False)
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_features(self) -> int:
        return len(self.smoothers)

    def components(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} columns, got shape {Z.shape}"
            )
        return np.column_stack([s.predict(Z[:, j]) for j, s in enumerate(self.smoothers)])

    def predict(self, Z) -> np.ndarray:
        return self.intercept + self.components(Z).sum(axis=1)


def fit_additive(Z, y, config: SmootherConfig | None = None, lambdas=None) -> AdditiveModel:
    """Backfit ``y = intercept + sum_j f_j(Z[:, j])`` with one smoother per column.

    Components start at zero and the intercept at ``mean(y)``. Each sweep
    smooths the partial residuals of every coordinate in turn and re-centers
    the result to mean zero on the training data. Iteration stops once no
    component moves by more than ``backfit_tol * sd(y)`` or after
    ``max_backfit_iters`` sweeps.

    Penalty weights are re-selected by GCV at every smoothing step unless
    ``lambdas`` (one per column) pins them.
    """
    config = config or DEFAULT_CONFIG
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if Z.ndim != 2 or Z.shape[1] < 1:
        raise DimensionMismatch(f"Z must be a non-empty 2-d matrix, got shape {Z.shape}")
    n, p = Z.shape
    if y.shape != (n,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({n},)")
    if n < 30:
        raise TooFewPoints(f"additive model needs at least 30 rows, got {n}")
    if lambdas is not None and len(lambdas) != p:
        raise DimensionMismatch(f"need {p} penalty weights, got {len(lambdas)}")
    for j in range(p):
        _validate_xy(Z[:, j], y, config)

    bases = [_PenalizedBasis(Z[:, j], config) for j in range(p)]
    intercept = float(y.mean())
    tol = config.backfit_tol * float(y.std())
    fitted = np.zeros((n, p))
    penalties = np.zeros(p)
    smoothers: list[SplineSmoother | None] = [None] * p
    rss_trace = []
    objective_trace = []
    converged = False
    n_iter = 0

    for n_iter in range(1, config.max_backfit_iters + 1):
        max_change = 0.0
        for j in range(p):
            partial = y - intercept - (fitted.sum(axis=1) - fitted[:, j])
            lam = None if lambdas is None else lambdas[j]
            smoother, fit = _make_smoother(bases[j], partial, lam)
            mean_j = float(fit.fitted.mean())
            f_j = fit.fitted - mean_j
            smoothers[j] = smoother.shifted(-mean_j)
            penalties[j] = fit.lam * fit.roughness
            max_change = max(max_change, float(np.max(np.abs(f_j - fitted[:, j]))))
            fitted[:, j] = f_j
        resid = y - intercept - fitted.sum(axis=1)
        rss = float(resid @ resid)
        rss_trace.append(rss)
        objective_trace.append(rss + float(penalties.sum()))
        if max_change <= tol:
            converged = True
            break

    return AdditiveModel(
        intercept=intercept,
        smoothers=tuple(smoothers),
        converged=converged,
        n_backfit_iters=n_iter,
        rss_trace=tuple(rss_trace),
        objective_trace=tuple(objective_trace),
    )


def predict_additive(m: AdditiveModel, Z_new) -> np.ndarray:
    return m.predict(Z_new)
