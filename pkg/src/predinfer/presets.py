"""Named experiment configurations."""

from __future__ import annotations

from . import inference as inf
from .harness import FIXED, ORACLE_ID, RETRAIN, ExperimentConfig

_FIXED_IDS = ("f1", "f2", "f3", ORACLE_ID)

PRESETS: dict[str, ExperimentConfig] = {
    "paper-s3-null": ExperimentConfig(design=FIXED, beta1_star=0.0, fhat_ids=_FIXED_IDS),
    "paper-s3-alt": ExperimentConfig(design=FIXED, beta1_star=1.0, fhat_ids=_FIXED_IDS),
    "paper-s4-null": ExperimentConfig(design=RETRAIN, beta1_star=0.0),
    "paper-s4-alt": ExperimentConfig(design=RETRAIN, beta1_star=1.0),
    # perfect predictor: every method should be calibrated here
    "oracle-extreme": ExperimentConfig(design=FIXED, beta1_star=0.0, fhat_ids=(ORACLE_ID,),
                                       methods=inf.ALL_METHODS),
}


def get_preset(name: str, **overrides) -> ExperimentConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return base.replace(**overrides) if overrides else base
