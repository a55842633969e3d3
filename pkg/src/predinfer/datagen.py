"""Simulated data from a partially linear additive model.

    Y = b0 + b1*Z1 + b2*g2(Z2) + b3*g3(Z3) + b4*g4(Z4) + eps

with independent standard normal Z columns and Gaussian noise. The covariate of
interest is X = Z1, and because the columns are independent the marginal
least-squares slope of Y on (1, X) equals b1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch

N_FEATURES = 4
_E_HALF = float(np.exp(0.5))


def g2(s):
    return s * s - 1.0


def g3(s):
    return np.sin(2.0 * s)


def g4(s):
    # E[exp(S)] = e^{1/2} for standard normal S
    return np.exp(s) - _E_HALF


NONLINEAR_TERMS = (g2, g3, g4)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator seeded through a SeedSequence (accepts ints or SeedSequences)."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class GenConfig:
    n: int
    beta1_star: float = 0.0
    beta_tilde: tuple[float, ...] | None = None
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.beta_tilde is None:
            object.__setattr__(self, "beta_tilde", (0.0, float(self.beta1_star), 1.0, 1.0, 1.0))
        bt = tuple(float(b) for b in self.beta_tilde)
        object.__setattr__(self, "beta_tilde", bt)
        if len(bt) != 5:
            raise ValueError(f"beta_tilde needs 5 entries, got {len(bt)}")
        if bt[1] != float(self.beta1_star):
            raise ValueError(
                f"beta_tilde[1]={bt[1]} must equal beta1_star={self.beta1_star}"
            )
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def with_(self, **changes) -> "GenConfig":
        fields = dict(n=self.n, beta1_star=self.beta1_star, beta_tilde=self.beta_tilde,
                      noise_sd=self.noise_sd, seed=self.seed)
        if "beta1_star" in changes and "beta_tilde" not in changes:
            bt = list(self.beta_tilde)
            bt[1] = float(changes["beta1_star"])
            changes["beta_tilde"] = tuple(bt)
        fields.update(changes)
        return GenConfig(**fields)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("dataset entries must be finite")


@dataclass(frozen=True)
class UnlabeledDataset:
    Z: np.ndarray
    x: np.ndarray = field(default=None)

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2:
            raise DimensionMismatch(f"Z must be 2-d, got shape {Z.shape}")
        x = Z[:, 0] if self.x is None else np.asarray(self.x, dtype=float)
        if x.shape != (Z.shape[0],):
            raise DimensionMismatch("x must have one entry per row of Z")
        _check_finite(Z, x)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.Z.shape[0]


@dataclass(frozen=True)
class LabeledDataset(UnlabeledDataset):
    y: np.ndarray = field(default=None, kw_only=True)

    def __post_init__(self):
        super().__post_init__()
        y = np.asarray(self.y, dtype=float)
        if y.shape != (self.Z.shape[0],):
            raise DimensionMismatch("y must have one entry per row of Z")
        _check_finite(y)
        object.__setattr__(self, "y", y)


def true_regression(Z, config: GenConfig) -> np.ndarray | float:
    """Noise-free mean ``E[Y | Z]``; accepts one row or a matrix of rows."""
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z2 = np.atleast_2d(Z)
    if Z2.shape[1] != N_FEATURES:
        raise DimensionMismatch(f"expected {N_FEATURES} predictors, got {Z2.shape[1]}")
    b = config.beta_tilde
    out = b[0] + b[1] * Z2[:, 0]
    for coef, g, col in zip(b[2:], NONLINEAR_TERMS, range(1, N_FEATURES)):
        out = out + coef * g(Z2[:, col])
    return float(out[0]) if single else out


def generate(config: GenConfig) -> LabeledDataset:
    rng = make_rng(config.seed)
    Z = rng.standard_normal((config.n, N_FEATURES))
    eps = config.noise_sd * rng.standard_normal(config.n)
    y = true_regression(Z, config) + eps
    return LabeledDataset(Z=Z, x=Z[:, 0].copy(), y=y)


def strip_labels(d: LabeledDataset) -> UnlabeledDataset:
    return UnlabeledDataset(Z=d.Z, x=d.x)


def _z_header(p: int) -> list[str]:
    return [f"z{j + 1}" for j in range(p)]


def write_csv(d: UnlabeledDataset, path) -> None:
    """Write ``y,z1..z4`` (labeled) or ``z1..z4`` (unlabeled) with a header row."""
    path = Path(path)
    labeled = isinstance(d, LabeledDataset)
    header = (["y"] if labeled else []) + _z_header(d.Z.shape[1])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(d.n):
            row = ([repr(float(d.y[i]))] if labeled else []) + [repr(float(v)) for v in d.Z[i]]
            w.writerow(row)


def read_table(path) -> dict[str, np.ndarray]:
    """Read a numeric CSV with a header row into ``{column: values}``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: malformed numeric table ({exc})") from None
    return {name: data[:, i] for i, name in enumerate(header)}


def read_csv(path, x_col: str = "z1") -> UnlabeledDataset:
    """Read a dataset CSV. A ``y`` column makes it labeled; ``z*`` columns form Z.

    When no ``z*`` columns exist, Z is the single column named ``x_col``.
    """
    cols = read_table(path)
    if x_col not in cols:
        raise KeyError(f"{path}: covariate column {x_col!r} not found in {list(cols)}")
    z_names = sorted((h for h in cols if h.startswith("z") and h[1:].isdigit()),
                     key=lambda h: int(h[1:]))
    Z = np.column_stack([cols[h] for h in z_names]) if z_names else cols[x_col][:, None]
    if "y" in cols:
        return LabeledDataset(Z=Z, x=cols[x_col], y=cols["y"])
    return UnlabeledDataset(Z=Z, x=cols[x_col])
