"""Black-box prediction functions f: Z -> Y.

Estimators only ever call :meth:`PredictorModel.predict` and read
:attr:`PredictorModel.id`; the payload stays opaque to them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .datagen import GenConfig, LabeledDataset, true_regression
from .errors import DegenerateInput, DimensionMismatch, TooFewPoints
from .smoother import SmootherConfig, fit_additive

KINDS = ("trained_additive", "oracle", "custom")


@dataclass(frozen=True)
class PredictorModel:
    kind: str
    payload: Any
    id: str
    n_features: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")

    def predict(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2:
            raise DimensionMismatch(f"Z must be 2-d, got shape {Z.shape}")
        if self.n_features is not None and Z.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"predictor {self.id!r} expects {self.n_features} columns, got {Z.shape[1]}"
            )
        if self.kind == "trained_additive":
            return self.payload.predict(Z)
        if self.kind == "oracle":
            return true_regression(Z, self.payload)
        return np.asarray(self.payload(Z), dtype=float)


def train_fhat(training: LabeledDataset, fhat_id: str = "trained",
               config: SmootherConfig | None = None) -> PredictorModel:
    if training.n < 30:
        raise TooFewPoints(f"training set needs at least 30 rows, got {training.n}")
    model = fit_additive(training.Z, training.y, config)
    return PredictorModel("trained_additive", model, fhat_id, training.Z.shape[1])


def oracle_fhat(config: GenConfig) -> PredictorModel:
    return PredictorModel("oracle", config, "oracle", 4)


def custom_fhat(fn: Callable[[np.ndarray], np.ndarray], fhat_id: str = "custom",
                n_features: int | None = None) -> PredictorModel:
    return PredictorModel("custom", fn, fhat_id, n_features)


def predict(model: PredictorModel, Z) -> np.ndarray:
    return model.predict(Z)


class PredictionTable:
    """Look up externally produced predictions by the exact bytes of each Z row.

    Lets precomputed prediction columns (one per dataset) act as a predictor.
    A row seen twice must carry the same prediction both times.
    """

    def __init__(self):
        self._table: dict[bytes, float] = {}

    def add(self, Z, values) -> "PredictionTable":
        Z = np.ascontiguousarray(np.asarray(Z, dtype=float))
        values = np.asarray(values, dtype=float)
        if values.shape != (Z.shape[0],):
            raise DimensionMismatch("one prediction per row required")
        for row, v in zip(Z, values):
            key = row.tobytes()
            old = self._table.setdefault(key, float(v))
            if old != float(v) and not (np.isnan(old) and np.isnan(v)):
                raise DegenerateInput("identical predictor rows carry different predictions")
        return self

    def __call__(self, Z) -> np.ndarray:
        Z = np.ascontiguousarray(np.asarray(Z, dtype=float))
        try:
            return np.array([self._table[row.tobytes()] for row in Z])
        except KeyError:
            raise KeyError("no stored prediction for a requested row") from None


def fhat_from_predictions(Z_lab, pred_lab, Z_unlab, pred_unlab,
                          fhat_id: str = "custom") -> PredictorModel:
    table = PredictionTable().add(Z_lab, pred_lab).add(Z_unlab, pred_unlab)
    return custom_fhat(table, fhat_id, np.asarray(Z_lab).shape[1])
