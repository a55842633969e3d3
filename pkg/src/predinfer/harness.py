"""Monte Carlo experiment runner.

Two designs are supported:

``fixed_fhat``
    A handful of predictors (``f1``, ``f2``, ... trained once on fixed seeds,
    plus the ``oracle`` true regression function) are reused across every
    replicate; only the labeled and unlabeled samples are redrawn.
``retrain_per_replicate``
    Every replicate also draws a fresh training set and retrains the
    predictor (id ``retrained``).

Each (replicate, n_lab, n_unlab) cell owns an independent random stream
spawned from the master seed, so results do not depend on execution order or
on the number of worker processes.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from . import inference as inf
from .datagen import GenConfig, generate, make_rng, strip_labels
from .errors import PredInferError
from .predictor import PredictorModel, custom_fhat, oracle_fhat, train_fhat

logger = logging.getLogger(__name__)

FIXED = "fixed_fhat"
RETRAIN = "retrain_per_replicate"
DESIGNS = (FIXED, RETRAIN)
RETRAINED_ID = "retrained"
ORACLE_ID = "oracle"

# first panel matches the original 300/300 study; the rest keep n_lab = 0.1 n_unlab
PAPER_GRID = ((300, 300), (300, 3000), (1000, 10000), (3000, 30000))
TRAINING_SEEDS = (301, 302, 303)
DEFAULT_SEED = 12345

RECORD_FIELDS = (
    "replicate", "method", "fhat_id", "n_lab", "n_unlab", "beta_hat", "se", "t_stat",
    "p_value", "ci_lo", "ci_hi", "covered", "rejected_at_05", "status",
)
SUMMARY_FIELDS = (
    "method", "fhat_id", "n_lab", "n_unlab", "replicates", "rejection_rate", "coverage",
    "ks_stat", "mean_beta", "sd_beta",
)
QQ_PROBS = np.arange(1, 100) / 100.0


@dataclass(frozen=True)
class ExperimentConfig:
    design: str = FIXED
    beta1_star: float = 0.0
    n_grid: tuple[tuple[int, int], ...] = PAPER_GRID
    n_train: int = 300
    replicates: int = 1000
    methods: tuple[str, ...] = inf.DEFAULT_METHODS
    B: int = 100
    ci_level: float = 0.95
    master_seed: int = DEFAULT_SEED
    fhat_ids: tuple[str, ...] = ("f1", "f2", "f3", ORACLE_ID)
    noise_mode: str = "gaussian"
    training_seeds: tuple[int, ...] = TRAINING_SEEDS
    noise_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple((int(a), int(b)) for a, b in self.n_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "fhat_ids", tuple(self.fhat_ids))
        if self.design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.n_grid:
            raise ValueError("n_grid is empty")
        for n_lab, n_unlab in self.n_grid:
            if n_lab < 10 or n_unlab < 3:
                raise ValueError(f"grid cell ({n_lab}, {n_unlab}) too small; need n_lab >= 10")
        bad = [m for m in self.methods if m not in inf.ALL_METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}; choose from {inf.ALL_METHODS}")
        if self.B < 1:
            raise ValueError("bootstrap B must be >= 1")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.noise_mode not in ("gaussian", "resample"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.design == RETRAIN:
            if self.fhat_ids != (RETRAINED_ID,):
                object.__setattr__(self, "fhat_ids", (RETRAINED_ID,))
        else:
            valid = {f"f{k + 1}" for k in range(len(self.training_seeds))} | {ORACLE_ID}
            bad = [f for f in self.fhat_ids if f not in valid]
            if bad or not self.fhat_ids:
                raise ValueError(f"unknown predictor ids {bad}; choose from {sorted(valid)}")

    def replace(self, **changes) -> "ExperimentConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ExperimentConfig(**values)

    def gen_config(self, n: int, seed: int) -> GenConfig:
        return GenConfig(n=n, beta1_star=self.beta1_star, noise_sd=self.noise_sd, seed=seed)


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    method: str
    fhat_id: str
    n_lab: int
    n_unlab: int
    beta_hat: float = float("nan")
    se: float = float("nan")
    t_stat: float = float("nan")
    p_value: float = float("nan")
    ci_lo: float = float("nan")
    ci_hi: float = float("nan")
    covered: bool = False
    rejected_at_05: bool = False
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def build_predictors(config: ExperimentConfig) -> dict[str, PredictorModel]:
    """Train the fixed predictors named in ``config.fhat_ids``."""
    out = {}
    for fid in config.fhat_ids:
        if fid == ORACLE_ID:
            out[fid] = oracle_fhat(config.gen_config(1, 0))
        else:
            seed = config.training_seeds[int(fid[1:]) - 1]
            training = generate(config.gen_config(config.n_train, seed))
            out[fid] = train_fhat(training, fid)
    return out


def _stream_seeds(config: ExperimentConfig, replicate_index: int, n_lab: int, n_unlab: int):
    ss = np.random.SeedSequence(
        config.master_seed, spawn_key=(int(replicate_index), int(n_lab), int(n_unlab))
    )
    lab, unlab, train, boot = ss.spawn(4)
    as_int = lambda s: int(s.generate_state(1, np.uint64)[0])  # noqa: E731
    return as_int(lab), as_int(unlab), as_int(train), boot


class _Memo:
    """Serve cached predictions for the exact arrays of one replicate."""

    def __init__(self, fhat: PredictorModel, arrays):
        self.fhat = fhat
        self.cache = [(Z, fhat.predict(Z)) for Z in arrays]

    def __call__(self, Z):
        for known, values in self.cache:
            if Z is known:
                return values
        return self.fhat.predict(Z)


def _to_record(est: inf.EstimateReport, config, replicate_index, n_lab, n_unlab, fhat_id):
    t, p, (lo, hi) = inf.report(est, config.beta1_star, config.ci_level)
    return ReplicateRecord(
        replicate=replicate_index,
        method=est.method,
        fhat_id=fhat_id,
        n_lab=n_lab,
        n_unlab=n_unlab,
        beta_hat=est.estimate,
        se=est.se,
        t_stat=t,
        p_value=p,
        ci_lo=lo,
        ci_hi=hi,
        covered=bool(lo <= config.beta1_star <= hi),
        rejected_at_05=bool(p < 0.05),
    )


def _failure(method, exc, replicate_index, fhat_id, n_lab, n_unlab):
    tag = getattr(exc, "tag", type(exc).__name__)
    return ReplicateRecord(replicate_index, method, fhat_id, n_lab, n_unlab, status=tag)


def run_replicate(config: ExperimentConfig, replicate_index: int, n_lab: int, n_unlab: int,
                  fhat: PredictorModel | None = None) -> list[ReplicateRecord]:
    """Draw fresh data for one replicate and run every configured method.

    ``fhat=None`` trains a predictor on a freshly drawn training set (the
    retrain design). Estimation errors are captured as failure rows.
    """
    seed_lab, seed_unlab, seed_train, boot_seq = _stream_seeds(
        config, replicate_index, n_lab, n_unlab
    )
    lab = generate(config.gen_config(n_lab, seed_lab))
    unlab = strip_labels(generate(config.gen_config(n_unlab, seed_unlab)))
    fhat_id = fhat.id if fhat is not None else RETRAINED_ID

    if fhat is None:
        try:
            fhat = train_fhat(generate(config.gen_config(config.n_train, seed_train)),
                              RETRAINED_ID)
        except PredInferError as exc:
            return [_failure(m, exc, replicate_index, fhat_id, n_lab, n_unlab)
                    for m in config.methods]

    fhat = custom_fhat(_Memo(fhat, (lab.Z, unlab.Z)), fhat.id, fhat.n_features)
    level = config.ci_level
    boot: dict | None = None
    boot_error: Exception | None = None
    records = []

    for method in config.methods:
        try:
            if method == inf.CLASSICAL:
                est = inf.estimate_classical(lab, ci_level=level)
            elif method == inf.NAIVE:
                est = inf.estimate_naive(unlab, fhat, ci_level=level)
            elif method == inf.WANG_ANALYTIC:
                est = inf.estimate_wang_analytic(lab, unlab, fhat, "code", ci_level=level)
            elif method == inf.WANG_ANALYTIC_PUB:
                est = inf.estimate_wang_analytic(lab, unlab, fhat, "publication",
                                                 ci_level=level)
            elif method == inf.PPI:
                est = inf.estimate_ppi(lab, unlab, fhat, ci_level=level)
            else:
                # both bootstrap SE modes summarize one shared set of draws
                if boot is None and boot_error is None:
                    try:
                        rel = inf.fit_relationship(lab, fhat)
                        f_unlab = fhat.predict(unlab.Z)
                        betas, ses = inf.wang_bootstrap_draws(
                            rel, unlab.x, f_unlab, config.B, config.noise_mode,
                            make_rng(boot_seq),
                        )
                        boot = {"betas": betas, "ses": ses}
                    except (PredInferError, np.linalg.LinAlgError) as exc:
                        boot_error = exc
                if boot_error is not None:
                    raise boot_error
                mode = "parametric" if method == inf.WANG_BOOT_PARAM else "nonparametric"
                est = inf.bootstrap_report(mode, boot["betas"], boot["ses"], lab, unlab, fhat,
                                           level)
            records.append(_to_record(est, config, replicate_index, n_lab, n_unlab, fhat_id))
        except (PredInferError, np.linalg.LinAlgError) as exc:
            records.append(_failure(method, exc, replicate_index, fhat_id, n_lab, n_unlab))
    return records


@dataclass(frozen=True)
class SummaryRow:
    method: str
    fhat_id: str
    n_lab: int
    n_unlab: int
    replicates: int
    rejection_rate: float
    coverage: float
    ks_stat: float
    mean_beta: float
    sd_beta: float
    t_quantiles: np.ndarray = field(repr=False, compare=False, default=None)


def ks_distance(sample, cdf="norm") -> float:
    """Kolmogorov-Smirnov sup distance between a sample and a reference CDF."""
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        return float("nan")
    return float(stats.kstest(sample, cdf).statistic)


def _cell_key(r: ReplicateRecord):
    return (r.method, r.fhat_id, r.n_lab, r.n_unlab)


def summarize(records) -> list[SummaryRow]:
    """Aggregate records per (method, fhat_id, n_lab, n_unlab), ignoring failure rows.

    Cells appear in first-seen order.
    """
    cells: dict[tuple, list[ReplicateRecord]] = {}
    for r in records:
        cells.setdefault(_cell_key(r), []).append(r)
    rows = []
    for (method, fhat_id, n_lab, n_unlab), recs in cells.items():
        ok = [r for r in recs if r.ok]
        n_ok = len(ok)
        if n_ok == 0:
            nan = float("nan")
            rows.append(SummaryRow(method, fhat_id, n_lab, n_unlab, 0, nan, nan, nan, nan, nan,
                                   np.full(QQ_PROBS.size, nan)))
            continue
        t = np.array([r.t_stat for r in ok])
        beta = np.array([r.beta_hat for r in ok])
        rows.append(SummaryRow(
            method=method,
            fhat_id=fhat_id,
            n_lab=n_lab,
            n_unlab=n_unlab,
            replicates=n_ok,
            rejection_rate=float(np.mean([r.rejected_at_05 for r in ok])),
            coverage=float(np.mean([r.covered for r in ok])),
            ks_stat=ks_distance(t),
            mean_beta=float(beta.mean()),
            sd_beta=float(beta.std(ddof=1)) if n_ok > 1 else float("nan"),
            t_quantiles=np.quantile(t, QQ_PROBS),
        ))
    return rows


def divergence_diagnostic(records, method: str, fhat_id: str):
    """Median |t| per grid cell for one method and predictor, ordered by n_unlab.

    A statistic whose estimator is inconsistent for the target keeps growing
    with the sample size instead of settling down.
    """
    by_n: dict[tuple[int, int], list[float]] = {}
    for r in records:
        if r.ok and r.method == method and r.fhat_id == fhat_id:
            by_n.setdefault((r.n_lab, r.n_unlab), []).append(abs(r.t_stat))
    return [(n_lab, n_unlab, float(np.median(v)))
            for (n_lab, n_unlab), v in sorted(by_n.items(), key=lambda kv: kv[0][::-1])]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_records(records, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_FIELDS)
            for r in records:
                w.writerow([_fmt(getattr(r, name)) for name in RECORD_FIELDS])
    except OSError as exc:
        raise OSError(f"could not write records to {path}: {exc}") from exc
    return path


def write_summary(rows, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_FIELDS)
            for row in rows:
                w.writerow([_fmt(getattr(row, name)) for name in SUMMARY_FIELDS])
    except OSError as exc:
        raise OSError(f"could not write summary to {path}: {exc}") from exc
    return path


def write_qq(rows, path) -> Path:
    """Long-format QQ table: empirical t quantiles against standard normal quantiles."""
    path = Path(path)
    normal_q = stats.norm.ppf(QQ_PROBS)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("method", "fhat_id", "n_lab", "n_unlab", "prob", "normal_quantile",
                        "t_quantile"))
            for row in rows:
                for p, zq, tq in zip(QQ_PROBS, normal_q, row.t_quantiles):
                    w.writerow([row.method, row.fhat_id, row.n_lab, row.n_unlab,
                                _fmt(p), _fmt(zq), _fmt(tq)])
    except OSError as exc:
        raise OSError(f"could not write QQ table to {path}: {exc}") from exc
    return path


def read_records(path) -> list[ReplicateRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ReplicateRecord(
                replicate=int(row["replicate"]),
                method=row["method"],
                fhat_id=row["fhat_id"],
                n_lab=int(row["n_lab"]),
                n_unlab=int(row["n_unlab"]),
                beta_hat=float(row["beta_hat"]),
                se=float(row["se"]),
                t_stat=float(row["t_stat"]),
                p_value=float(row["p_value"]),
                ci_lo=float(row["ci_lo"]),
                ci_hi=float(row["ci_hi"]),
                covered=row["covered"] == "1",
                rejected_at_05=row["rejected_at_05"] == "1",
                status=row["status"],
            ))
    return out


def _run_chunk(args):
    config, fhat, n_lab, n_unlab, start, stop = args
    out = []
    for rep in range(start, stop):
        out.extend(run_replicate(config, rep, n_lab, n_unlab, fhat))
    return out


def default_threads() -> int:
    env = os.environ.get("PREDINFER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[ReplicateRecord]
    summary: list[SummaryRow]
    paths: dict[str, Path] = field(default_factory=dict)


def run_experiment(config: ExperimentConfig, out_dir=None, threads: int | None = None,
                   predictors: dict[str, PredictorModel] | None = None) -> ExperimentResult:
    """Run the full grid and optionally write ``records.csv``, ``summary.csv`` and ``qq.csv``.

    Records are ordered by predictor, grid cell, replicate and method no
    matter how many worker processes were used.
    """
    threads = threads or default_threads()
    if config.design == FIXED:
        predictors = predictors or build_predictors(config)
        fhats = [predictors[f] for f in config.fhat_ids]
    else:
        fhats = [None]

    chunk = max(1, min(50, config.replicates // max(1, 4 * threads) or 1))
    tasks = [
        (config, fhat, n_lab, n_unlab, start, min(start + chunk, config.replicates))
        for fhat in fhats
        for n_lab, n_unlab in config.n_grid
        for start in range(0, config.replicates, chunk)
    ]
    records: list[ReplicateRecord] = []
    if threads == 1:
        for task in tasks:
            records.extend(_run_chunk(task))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(_run_chunk, tasks):
                records.extend(part)

    summary = summarize(records)
    result = ExperimentResult(config, records, summary)
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"could not create output directory {out_dir}: {exc}") from exc
        result.paths = {
            "records": write_records(records, out_dir / "records.csv"),
            "summary": write_summary(summary, out_dir / "summary.csv"),
            "qq": write_qq(summary, out_dir / "qq.csv"),
        }
    return result
