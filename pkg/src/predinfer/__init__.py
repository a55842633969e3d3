"""Prediction-based inference: estimators for a regression slope when the
outcome is observed on a small labeled sample and predicted elsewhere, plus a
Monte Carlo harness for auditing their calibration."""

from .datagen import (
    GenConfig,
    LabeledDataset,
    UnlabeledDataset,
    generate,
    make_rng,
    read_csv,
    strip_labels,
    true_regression,
    write_csv,
)
from .errors import (
    DegenerateInput,
    DimensionMismatch,
    PredInferError,
    RankDeficient,
    TooFewPoints,
    UndefinedSE,
    ZeroSE,
)
from .harness import (
    ExperimentConfig,
    ReplicateRecord,
    divergence_diagnostic,
    run_experiment,
    run_replicate,
    summarize,
)
from .inference import (
    ALL_METHODS,
    DEFAULT_METHODS,
    EstimateReport,
    estimate_classical,
    estimate_naive,
    estimate_ppi,
    estimate_wang_analytic,
    estimate_wang_bootstrap,
    report,
)
from .linmod import FittedLinearModel, coefficient_se, design_matrix, ols_fit
from .predictor import PredictorModel, custom_fhat, oracle_fhat, predict, train_fhat
from .presets import PRESETS, get_preset
from .smoother import (
    AdditiveModel,
    SmootherConfig,
    SplineSmoother,
    fit_additive,
    fit_spline,
    predict_additive,
    predict_spline,
)

__version__ = "0.1.0"
