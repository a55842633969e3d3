"""Estimators for the slope of Y on X when Y is only partly observed.

Each estimator takes a labeled dataset, an unlabeled dataset (where needed)
and a black-box predictor, and returns an :class:`EstimateReport` for the
target coordinate (the slope, index 1, of a fit on ``(1, x)``).

Methods
-------
classical
    OLS on the labeled data alone.
naive
    OLS of the predictions on ``x`` over the unlabeled data.
wang_analytic / wang_analytic_pub
    Naive estimate rescaled by the labeled-data regression of ``y`` on the
    predictions (two published variants of the intercept handling).
wang_boot_param / wang_boot_nonparam
    Bootstrap through a fitted relationship model ``y | f ~ g(f) + noise``.
ppi
    Naive estimate plus the labeled-data rectifier; the only one of the
    prediction-based methods that is consistent for an arbitrary predictor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .datagen import LabeledDataset, UnlabeledDataset
from .errors import DegenerateInput, UndefinedSE, ZeroSE
from .linmod import design_matrix, ols_fit, simple_ols
from .predictor import PredictorModel
from .smoother import SmootherConfig, SplineSmoother, fit_spline

CLASSICAL = "classical"
NAIVE = "naive"
WANG_ANALYTIC = "wang_analytic"
WANG_ANALYTIC_PUB = "wang_analytic_pub"
WANG_BOOT_PARAM = "wang_boot_param"
WANG_BOOT_NONPARAM = "wang_boot_nonparam"
PPI = "ppi"

ALL_METHODS = (
    NAIVE,
    CLASSICAL,
    WANG_ANALYTIC,
    WANG_ANALYTIC_PUB,
    WANG_BOOT_PARAM,
    WANG_BOOT_NONPARAM,
    PPI,
)
# the six methods compared in the simulations
DEFAULT_METHODS = (NAIVE, CLASSICAL, WANG_ANALYTIC, WANG_BOOT_PARAM, WANG_BOOT_NONPARAM, PPI)

SLOPE = 1


@dataclass(frozen=True)
class EstimateReport:
    method: str
    beta_hat: np.ndarray
    se: float
    target_j: int = SLOPE
    ci_level: float = 0.95
    n_lab: int = 0
    n_unlab: int = 0
    fhat_id: str = ""

    @property
    def estimate(self) -> float:
        return float(self.beta_hat[self.target_j])

    @property
    def ci(self) -> tuple[float, float]:
        half = norm.ppf(0.5 + self.ci_level / 2.0) * self.se
        return self.estimate - half, self.estimate + half

    def t_stat_at(self, beta_null: float) -> float:
        if not self.se > 0:
            raise ZeroSE(f"{self.method}: standard error is zero")
        return (self.estimate - beta_null) / self.se

    def p_value_two_sided(self, beta_null: float) -> float:
        return float(2.0 * norm.sf(abs(self.t_stat_at(beta_null))))


def report(est: EstimateReport, beta_null: float = 0.0, ci_level: float | None = None):
    """Return ``(t, p, (ci_lo, ci_hi))`` for testing ``beta_j = beta_null``.

    Uses the standard normal reference distribution. Raises ``ZeroSE`` rather
    than returning an infinite statistic.
    """
    if ci_level is not None and ci_level != est.ci_level:
        est = EstimateReport(est.method, est.beta_hat, est.se, est.target_j, ci_level,
                             est.n_lab, est.n_unlab, est.fhat_id)
    t = est.t_stat_at(beta_null)
    p = float(2.0 * norm.sf(abs(t)))
    return t, p, est.ci


def _report(method, beta, se, n_lab, n_unlab, fhat_id, ci_level):
    return EstimateReport(
        method=method,
        beta_hat=np.asarray(beta, dtype=float),
        se=float(se),
        ci_level=ci_level,
        n_lab=n_lab,
        n_unlab=n_unlab,
        fhat_id=fhat_id,
    )


def estimate_classical(lab: LabeledDataset, *, ci_level: float = 0.95,
                       se_mode: str = "model") -> EstimateReport:
    fit = ols_fit(design_matrix(lab.x), lab.y)
    return _report(CLASSICAL, fit.beta, fit.se(SLOPE, se_mode), lab.n, 0, "", ci_level)


def estimate_naive(unlab: UnlabeledDataset, fhat: PredictorModel, *,
                   ci_level: float = 0.95, se_mode: str = "model") -> EstimateReport:
    fit = ols_fit(design_matrix(unlab.x), fhat.predict(unlab.Z))
    return _report(NAIVE, fit.beta, fit.se(SLOPE, se_mode), 0, unlab.n, fhat.id, ci_level)


def _gamma(y_lab: np.ndarray, f_lab: np.ndarray) -> tuple[float, float]:
    var_f = float(np.var(f_lab, ddof=1))
    if not var_f > 0:
        raise DegenerateInput("predictions on the labeled data have zero variance")
    gamma1 = float(np.cov(y_lab, f_lab, ddof=1)[0, 1]) / var_f
    gamma0 = float(y_lab.mean()) - gamma1 * float(f_lab.mean())
    return gamma0, gamma1


def estimate_wang_analytic(lab: LabeledDataset, unlab: UnlabeledDataset,
                           fhat: PredictorModel, variant: str = "code", *,
                           ci_level: float = 0.95) -> EstimateReport:
    """Naive estimate rescaled by ``gamma1 = Cov(y, f) / Var(f)`` on the labeled data.

    ``variant="code"`` returns ``gamma1 * beta_naive``. ``variant="publication"``
    returns ``gamma0 (X'X)^-1 X'1 + gamma1 * beta_naive`` with
    ``gamma0 = mean(y) - gamma1 * mean(f)``. The slope agrees between the two
    when ``X`` carries an intercept column.

    The standard error is ``|gamma1|`` times the naive model SE; sampling
    variability of ``gamma1`` is ignored.
    """
    if variant not in ("code", "publication"):
        raise ValueError(f"unknown variant {variant!r}")
    gamma0, gamma1 = _gamma(lab.y, fhat.predict(lab.Z))
    X = design_matrix(unlab.x)
    naive = ols_fit(X, fhat.predict(unlab.Z))
    beta = gamma1 * naive.beta
    method = WANG_ANALYTIC
    if variant == "publication":
        method = WANG_ANALYTIC_PUB
        beta = beta + gamma0 * ols_fit(X, np.ones(unlab.n)).beta
    se = abs(gamma1) * naive.se(SLOPE, "model")
    return _report(method, beta, se, lab.n, unlab.n, fhat.id, ci_level)


def estimate_ppi(lab: LabeledDataset, unlab: UnlabeledDataset, fhat: PredictorModel, *,
                 ci_level: float = 0.95) -> EstimateReport:
    """Prediction-powered estimate ``beta_f,unlab + (beta_y,lab - beta_f,lab)``.

    The rectifier is fitted directly as the regression of ``y - f`` on the
    labeled design. The two samples are independent, so the variance is the
    sum of the two HC0 sandwich covariances.
    """
    f_unlab = ols_fit(design_matrix(unlab.x), fhat.predict(unlab.Z))
    rectifier = ols_fit(design_matrix(lab.x), lab.y - fhat.predict(lab.Z))
    beta = f_unlab.beta + rectifier.beta
    var = f_unlab.sandwich_cov[SLOPE, SLOPE] + rectifier.sandwich_cov[SLOPE, SLOPE]
    return _report(PPI, beta, np.sqrt(max(var, 0.0)), lab.n, unlab.n, fhat.id, ci_level)


@dataclass(frozen=True)
class RelationshipModel:
    ghat: SplineSmoother
    resid_sd: float
    resid_pool: np.ndarray


def fit_relationship(lab: LabeledDataset, fhat: PredictorModel,
                     config: SmootherConfig | None = None) -> RelationshipModel:
    f_lab = fhat.predict(lab.Z)
    if not np.ptp(f_lab) > 0:
        raise DegenerateInput("predictions on the labeled data are constant")
    ghat = fit_spline(f_lab, lab.y, config)
    resid = lab.y - ghat.predict(f_lab)
    return RelationshipModel(ghat=ghat, resid_sd=ghat.resid_sd, resid_pool=resid - resid.mean())


def _draw_noise(rel: RelationshipModel, shape, noise_mode: str, rng) -> np.ndarray:
    if noise_mode == "gaussian":
        return rel.resid_sd * rng.standard_normal(shape)
    if noise_mode == "resample":
        pool = rel.resid_pool
        return pool[rng.integers(0, pool.shape[0], size=shape)]
    raise ValueError(f"unknown noise mode {noise_mode!r}")


def sample_outcomes(rel: RelationshipModel, fhat_values, noise_mode: str = "gaussian",
                    rng=None) -> np.ndarray:
    """Draw ``y ~ g(f) + noise`` for each prediction value ``f``."""
    fhat_values = np.asarray(fhat_values, dtype=float)
    rng = rng if rng is not None else np.random.default_rng()
    return rel.ghat.predict(fhat_values) + _draw_noise(rel, fhat_values.shape, noise_mode, rng)


# max bootstrap cells (replicates x rows) materialized at once
_CHUNK_CELLS = 1 << 21


def wang_bootstrap_draws(rel: RelationshipModel, x_unlab, f_unlab, B: int,
                         noise_mode: str = "gaussian", rng=None):
    """Run the bootstrap loop and return per-draw coefficients and slope SEs.

    For each draw the unlabeled rows are resampled with replacement, outcomes
    are simulated from the relationship model at the resampled predictions,
    and ``(1, x)`` is refit. Returns ``(betas, slope_ses)`` with shapes
    ``(B, 2)`` and ``(B,)``.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()
    x_unlab = np.asarray(x_unlab, dtype=float)
    n = x_unlab.shape[0]
    g_unlab = rel.ghat.predict(f_unlab)
    # shift both variables before gathering; the fit is refit-invariant to it
    x_shift = float(x_unlab.mean())
    g_shift = float(g_unlab.mean())
    x_c = x_unlab - x_shift
    g_c = g_unlab - g_shift
    betas = np.empty((B, 2))
    ses = np.empty(B)
    per_chunk = max(1, _CHUNK_CELLS // n)
    for start in range(0, B, per_chunk):
        m = min(per_chunk, B - start)
        idx = rng.integers(0, n, size=(m, n))
        y_tilde = g_c[idx] + _draw_noise(rel, (m, n), noise_mode, rng)
        b0, b1, s1 = simple_ols(x_c[idx], y_tilde)
        betas[start:start + m, 0] = b0 + g_shift - b1 * x_shift
        betas[start:start + m, 1] = b1
        ses[start:start + m] = s1
    return betas, ses


def bootstrap_report(se_mode, betas, ses, lab, unlab, fhat, ci_level):
    point = np.median(betas, axis=0)
    if se_mode == "parametric":
        return _report(WANG_BOOT_PARAM, point, np.median(ses), lab.n, unlab.n, fhat.id,
                       ci_level)
    if se_mode == "nonparametric":
        if betas.shape[0] < 2:
            raise UndefinedSE("nonparametric bootstrap SE needs B >= 2")
        se = float(np.std(betas[:, SLOPE], ddof=1))
        return _report(WANG_BOOT_NONPARAM, point, se, lab.n, unlab.n, fhat.id, ci_level)
    raise ValueError(f"unknown bootstrap SE mode {se_mode!r}")


def estimate_wang_bootstrap(lab: LabeledDataset, unlab: UnlabeledDataset,
                            fhat: PredictorModel, B: int = 100,
                            se_mode: str = "parametric", noise_mode: str = "gaussian",
                            rng=None, *, ci_level: float = 0.95) -> EstimateReport:
    """Bootstrap correction through a spline relationship model.

    Point estimate is the median of the bootstrap slopes. ``se_mode`` picks
    the standard deviation of those slopes (``"nonparametric"``) or the median
    of their model-based SEs (``"parametric"``).
    """
    if se_mode not in ("parametric", "nonparametric"):
        raise ValueError(f"unknown bootstrap SE mode {se_mode!r}")
    if se_mode == "nonparametric" and B < 2:
        raise UndefinedSE("nonparametric bootstrap SE needs B >= 2")
    return wang_bootstrap_both(lab, unlab, fhat, B, noise_mode, rng,
                               ci_level=ci_level, se_modes=(se_mode,))[se_mode]


def wang_bootstrap_both(lab, unlab, fhat, B: int = 100, noise_mode: str = "gaussian",
                        rng=None, *, ci_level: float = 0.95,
                        se_modes=("parametric", "nonparametric")) -> dict[str, EstimateReport]:
    """One set of bootstrap draws summarized under each requested SE mode."""
    rel = fit_relationship(lab, fhat)
    betas, ses = wang_bootstrap_draws(rel, unlab.x, fhat.predict(unlab.Z), B, noise_mode, rng)
    return {mode: bootstrap_report(mode, betas, ses, lab, unlab, fhat, ci_level)
            for mode in se_modes}
