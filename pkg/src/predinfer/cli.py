"""Command-line entry point: ``predinfer {simulate,preset,estimate}``.

Exit status is 0 on success, 2 on a usage error and 1 on a runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import inference as inf
from .datagen import LabeledDataset, make_rng, read_csv, read_table
from .errors import PredInferError
from .harness import DESIGNS, PAPER_GRID, ExperimentConfig, run_experiment
from .predictor import custom_fhat
from .presets import PRESETS, get_preset

log = logging.getLogger("predinfer")

USAGE_ERROR = 2
RUNTIME_ERROR = 1

# config-file keys, mirroring the simulate flags
CONFIG_KEYS = ("design", "beta1", "n-lab", "n-unlab", "n-train", "replicates", "methods",
               "bootstrap-b", "seed", "fhat", "out-dir", "ci-level", "noise-mode")
PREDICTION_COLUMNS = ("prediction", "pred", "yhat", "fhat")
ESTIMATE_FIELDS = ("method", "beta_hat", "se", "t_stat", "p_value", "ci_lo", "ci_hi",
                   "n_lab", "n_unlab", "status")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _methods(text) -> tuple[str, ...]:
    methods = _str_list(text)
    bad = [m for m in methods if m not in inf.ALL_METHODS]
    if bad or not methods:
        raise UsageError(f"invalid --methods {bad or text!r}; choose from "
                         f"{', '.join(inf.ALL_METHODS)}")
    return methods


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-").lstrip("-")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _grid(n_lab, n_unlab):
    if n_lab is None and n_unlab is None:
        return PAPER_GRID
    if n_unlab is None:
        raise UsageError("--n-lab requires --n-unlab")
    unlab = _int_list(n_unlab)
    lab = _int_list(n_lab) if n_lab is not None else [max(1, round(0.1 * m)) for m in unlab]
    if len(lab) == 1 and len(unlab) > 1:
        lab = lab * len(unlab)
    if len(lab) != len(unlab):
        raise UsageError("--n-lab and --n-unlab lists must have equal length")
    return tuple(zip(lab, unlab))


def _simulate_config(args) -> tuple[ExperimentConfig, str]:
    values = read_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        flag = getattr(args, key.replace("-", "_"))
        if flag is not None:
            values[key] = flag
    kwargs = {"n_grid": _grid(values.get("n-lab"), values.get("n-unlab"))}
    try:
        if "design" in values:
            kwargs["design"] = values["design"]
        if "beta1" in values:
            kwargs["beta1_star"] = float(values["beta1"])
        if "n-train" in values:
            kwargs["n_train"] = int(values["n-train"])
        if "replicates" in values:
            kwargs["replicates"] = int(values["replicates"])
        if "bootstrap-b" in values:
            kwargs["B"] = int(values["bootstrap-b"])
        if "seed" in values:
            kwargs["master_seed"] = int(values["seed"])
        if "ci-level" in values:
            kwargs["ci_level"] = float(values["ci-level"])
        if "noise-mode" in values:
            kwargs["noise_mode"] = values["noise-mode"]
    except ValueError as exc:
        raise UsageError(f"bad numeric value: {exc}") from None
    if "methods" in values:
        kwargs["methods"] = _methods(values["methods"])
    if "fhat" in values:
        kwargs["fhat_ids"] = _str_list(values["fhat"])
    try:
        config = ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return config, values.get("out-dir", "predinfer-out")


def _run_and_report(config: ExperimentConfig, out_dir) -> int:
    result = run_experiment(config, out_dir=out_dir)
    failures = sum(not r.ok for r in result.records)
    print(f"wrote {result.paths['records']} ({len(result.records)} records, "
          f"{failures} failures)")
    print(f"wrote {result.paths['summary']}")
    print(f"wrote {result.paths['qq']}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("method", "fhat_id", "n_lab", "n_unlab", "rejection_rate", "coverage",
                "ks_stat"))
    for s in result.summary:
        w.writerow((s.method, s.fhat_id, s.n_lab, s.n_unlab, f"{s.rejection_rate:.3f}",
                    f"{s.coverage:.3f}", f"{s.ks_stat:.3f}"))
    return 0


def cmd_simulate(args) -> int:
    config, out_dir = _simulate_config(args)
    return _run_and_report(config, out_dir)


def cmd_preset(args) -> int:
    if args.name not in PRESETS:
        raise UsageError(f"unknown preset {args.name!r}; choose from {', '.join(PRESETS)}")
    overrides = dict(replicates=args.replicates, master_seed=args.seed,
                     beta1_star=args.beta1, B=args.bootstrap_b)
    if args.methods is not None:
        overrides["methods"] = _methods(args.methods)
    try:
        config = get_preset(args.name, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return _run_and_report(config, args.out_dir or f"predinfer-{args.name}")


def _load_predictions(spec: str, table: dict[str, np.ndarray], n: int, which: str):
    if spec in table:
        values = table[spec]
    elif Path(spec).is_file():
        other = read_table(spec)
        if len(other) == 1:
            values = next(iter(other.values()))
        else:
            named = [c for c in PREDICTION_COLUMNS if c in other]
            if not named:
                raise ValueError(f"{spec}: cannot tell which column holds predictions; "
                                 f"name it one of {', '.join(PREDICTION_COLUMNS)}")
            values = other[named[0]]
    else:
        raise ValueError(f"{which} predictions {spec!r} is neither a column of the "
                         "dataset nor a readable file")
    if values.shape != (n,):
        raise ValueError(f"{which} predictions have {values.shape[0]} rows, dataset has {n}")
    return values


def cmd_estimate(args) -> int:
    methods = _methods(args.methods)
    if not 0 < args.ci_level < 1:
        raise UsageError("--ci-level must lie in (0, 1)")
    lab_table = read_table(args.labeled)
    unlab_table = read_table(args.unlabeled)
    lab = read_csv(args.labeled, x_col=args.x_col)
    unlab = read_csv(args.unlabeled, x_col=args.x_col)
    if not isinstance(lab, LabeledDataset):
        raise ValueError(f"{args.labeled}: labeled data needs a 'y' column")
    if lab.Z.shape[1] != unlab.Z.shape[1]:
        raise ValueError("labeled and unlabeled files have different predictor columns")
    f_lab = _load_predictions(args.predictions_labeled, lab_table, lab.n, "labeled")
    f_unlab = _load_predictions(args.predictions_unlabeled, unlab_table, unlab.n, "unlabeled")

    def lookup(Z):
        if Z is lab.Z:
            return f_lab
        if Z is unlab.Z:
            return f_unlab
        raise KeyError("predictions are only available for the supplied datasets")

    fhat = custom_fhat(lookup, "supplied", lab.Z.shape[1])
    rng = make_rng(args.seed)
    level = args.ci_level
    boot = None
    failed = 0
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(ESTIMATE_FIELDS)
    for method in methods:
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
                if boot is None:
                    rel = inf.fit_relationship(lab, fhat)
                    boot = inf.wang_bootstrap_draws(rel, unlab.x, f_unlab, args.bootstrap_b,
                                                    args.noise_mode, rng)
                mode = "parametric" if method == inf.WANG_BOOT_PARAM else "nonparametric"
                est = inf.bootstrap_report(mode, *boot, lab, unlab, fhat, level)
            t, p, (lo, hi) = inf.report(est, args.beta_null, level)
            w.writerow((method, repr(est.estimate), repr(est.se), repr(t), repr(p), repr(lo),
                        repr(hi), lab.n, unlab.n, "ok"))
        except PredInferError as exc:
            failed += 1
            log.error("%s: %s", method, exc)
            w.writerow((method, *["nan"] * 6, lab.n, unlab.n, exc.tag))
    return RUNTIME_ERROR if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="predinfer",
                description="Prediction-based inference estimators and simulation harness.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a simulation grid")
    sim.add_argument("--config", help="key = value file; flags override its entries")
    sim.add_argument("--design", choices=DESIGNS)
    sim.add_argument("--beta1", help="true slope beta1*")
    sim.add_argument("--n-lab", help="comma list; defaults to 0.1 * n-unlab")
    sim.add_argument("--n-unlab", help="comma list")
    sim.add_argument("--n-train")
    sim.add_argument("--replicates")
    sim.add_argument("--methods", help=f"comma list from {', '.join(inf.ALL_METHODS)}")
    sim.add_argument("--bootstrap-b")
    sim.add_argument("--seed", help="master seed")
    sim.add_argument("--fhat", help="comma list of f1, f2, f3, oracle (fixed design)")
    sim.add_argument("--out-dir")
    sim.add_argument("--ci-level")
    sim.add_argument("--noise-mode", choices=("gaussian", "resample"))
    sim.set_defaults(func=cmd_simulate)

    pre = sub.add_parser("preset", help="run a named configuration")
    pre.add_argument("name", help=", ".join(PRESETS))
    pre.add_argument("--replicates", type=int)
    pre.add_argument("--seed", type=int)
    pre.add_argument("--beta1", type=float)
    pre.add_argument("--bootstrap-b", type=int)
    pre.add_argument("--methods")
    pre.add_argument("--out-dir")
    pre.set_defaults(func=cmd_preset)

    est = sub.add_parser("estimate", help="run estimators on CSV data")
    est.add_argument("--labeled", required=True, help="CSV with y and z1.. (or x) columns")
    est.add_argument("--unlabeled", required=True, help="CSV with z1.. (or x) columns")
    est.add_argument("--predictions-labeled", required=True, metavar="COL|FILE")
    est.add_argument("--predictions-unlabeled", required=True, metavar="COL|FILE")
    est.add_argument("--x-col", default="z1", help="covariate of interest (default z1)")
    est.add_argument("--methods", default=",".join(inf.DEFAULT_METHODS))
    est.add_argument("--beta-null", type=float, default=0.0)
    est.add_argument("--ci-level", type=float, default=0.95)
    est.add_argument("--bootstrap-b", type=int, default=100)
    est.add_argument("--noise-mode", choices=("gaussian", "resample"), default="gaussian")
    est.add_argument("--seed", type=int, default=0)
    est.set_defaults(func=cmd_estimate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (PredInferError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
