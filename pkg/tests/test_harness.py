import numpy as np
import pytest
from scipy import stats

from predinfer import inference as inf
from predinfer.datagen import generate
from predinfer.harness import (
    QQ_PROBS,
    RECORD_FIELDS,
    SUMMARY_FIELDS,
    ExperimentConfig,
    ReplicateRecord,
    _stream_seeds,
    build_predictors,
    divergence_diagnostic,
    ks_distance,
    read_records,
    run_experiment,
    run_replicate,
    summarize,
)
from predinfer.predictor import custom_fhat
from predinfer.presets import PRESETS, get_preset

SMALL = dict(n_grid=((30, 100),), replicates=3, B=10)


def test_classical_only_record_matches_direct_estimate():
    cfg = ExperimentConfig(methods=(inf.CLASSICAL,), fhat_ids=("oracle",), beta1_star=1.0,
                           **SMALL)
    fhat = build_predictors(cfg)["oracle"]
    (rec,) = run_replicate(cfg, 2, 30, 100, fhat)
    seed_lab, *_ = _stream_seeds(cfg, 2, 30, 100)
    est = inf.estimate_classical(generate(cfg.gen_config(30, seed_lab)))
    t, p, (lo, hi) = inf.report(est, 1.0)
    assert (rec.beta_hat, rec.se, rec.t_stat, rec.p_value, rec.ci_lo, rec.ci_hi) == (
        est.estimate, est.se, t, p, lo, hi)
    assert rec.covered == (lo <= 1.0 <= hi) and rec.rejected_at_05 == (p < 0.05)
    assert rec.status == "ok" and rec.fhat_id == "oracle"


def test_replicates_are_deterministic_and_distinct():
    cfg = ExperimentConfig(design="retrain_per_replicate", **SMALL)
    a = run_replicate(cfg, 0, 30, 100)
    assert a == run_replicate(cfg, 0, 30, 100)
    assert a != run_replicate(cfg, 1, 30, 100)
    assert [r.method for r in a] == list(inf.DEFAULT_METHODS)


def test_method_failures_become_rows():
    cfg = ExperimentConfig(fhat_ids=("oracle",), methods=inf.ALL_METHODS, **SMALL)
    flat = custom_fhat(lambda Z: np.zeros(len(Z)), "flat", 4)
    recs = {r.method: r for r in run_replicate(cfg, 0, 30, 100, flat)}
    for m in (inf.WANG_ANALYTIC, inf.WANG_ANALYTIC_PUB, inf.WANG_BOOT_PARAM,
              inf.WANG_BOOT_NONPARAM):
        assert recs[m].status == "degenerate_input" and np.isnan(recs[m].beta_hat)
    assert recs[inf.NAIVE].status == "zero_se"
    assert recs[inf.CLASSICAL].ok and recs[inf.PPI].ok
    summary = {s.method: s for s in summarize(recs.values())}
    assert summary[inf.CLASSICAL].replicates == 1 and summary[inf.NAIVE].replicates == 0


def test_summary_statistics():
    recs = [ReplicateRecord(i, "m", "f", 10, 100, beta_hat=float(i), t_stat=0.1 * i,
                            covered=True, rejected_at_05=i % 4 == 0) for i in range(8)]
    (s,) = summarize(recs)
    assert s.coverage == 1.0 and s.rejection_rate == 0.25 and s.replicates == 8
    assert s.mean_beta == 3.5 and s.sd_beta == pytest.approx(np.std(range(8), ddof=1))
    assert s.t_quantiles.shape == QQ_PROBS.shape
    assert 0 <= s.ks_stat <= 1


def test_ks_of_normal_draws_below_critical_value():
    t = np.random.default_rng(2024).standard_normal(1000)
    assert ks_distance(t) < 0.043
    # the 5% critical value for n = 1000
    assert stats.kstwo.ppf(0.95, 1000) == pytest.approx(0.0429, abs=2e-4)


def test_rejection_rate_of_uniform_p_values():
    p = np.random.default_rng(7).uniform(size=1000)
    recs = [ReplicateRecord(i, "m", "f", 10, 100, t_stat=0.0, p_value=v,
                            rejected_at_05=bool(v < 0.05)) for i, v in enumerate(p)]
    assert abs(summarize(recs)[0].rejection_rate - 0.05) <= 0.014


def test_experiment_row_counts_and_files(tmp_path):
    one = run_experiment(ExperimentConfig(methods=(inf.PPI,), fhat_ids=("f1",), n_grid=((30, 100),),
                                          replicates=2, B=10), threads=1)
    assert len(one.records) == 2
    cfg = ExperimentConfig(methods=(inf.NAIVE, inf.PPI), fhat_ids=("f2", "oracle"),
                           n_grid=((20, 60), (30, 100)), replicates=3, B=10)
    res = run_experiment(cfg, out_dir=tmp_path, threads=1)
    assert len(res.records) == 3 * 2 * 2 * 2
    lines = (tmp_path / "records.csv").read_text().splitlines()
    assert lines[0] == ",".join(RECORD_FIELDS) and len(lines) == 25
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == ",".join(SUMMARY_FIELDS) and len(summary) == 1 + 8
    assert len((tmp_path / "qq.csv").read_text().splitlines()) == 1 + 8 * 99
    assert read_records(tmp_path / "records.csv") == res.records
    order = [(r.fhat_id, r.n_lab, r.replicate) for r in res.records]
    assert order == sorted(order, key=lambda k: (cfg.fhat_ids.index(k[0]), k[1], k[2]))


def test_output_bytes_do_not_depend_on_worker_count(tmp_path):
    cfg = ExperimentConfig(design="retrain_per_replicate", n_grid=((30, 100), (20, 50)),
                           replicates=5, B=10, methods=inf.ALL_METHODS)
    run_experiment(cfg, out_dir=tmp_path / "serial", threads=1)
    run_experiment(cfg, out_dir=tmp_path / "pool", threads=3)
    for name in ("records.csv", "summary.csv", "qq.csv"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()


def test_unwritable_output_names_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = ExperimentConfig(methods=(inf.CLASSICAL,), fhat_ids=("oracle",), **SMALL)
    with pytest.raises(OSError, match="file"):
        run_experiment(cfg, out_dir=blocker / "sub", threads=1)


def test_divergence_diagnostic_orders_by_sample_size():
    recs = [ReplicateRecord(i, "m", "f", nl, nu, t_stat=t)
            for i, (nl, nu, t) in enumerate([(300, 3000, -2.0), (30, 300, 1.0),
                                              (300, 3000, 4.0), (30, 300, -3.0)])]
    recs.append(ReplicateRecord(9, "m", "f", 30, 300, status="rank_deficient"))
    assert divergence_diagnostic(recs, "m", "f") == [(30, 300, 2.0), (300, 3000, 3.0)]
    assert divergence_diagnostic(recs, "other", "f") == []


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(replicates=0)
    with pytest.raises(ValueError):
        ExperimentConfig(n_grid=((5, 100),))
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("magic",))
    with pytest.raises(ValueError):
        ExperimentConfig(fhat_ids=("f9",))
    with pytest.raises(ValueError):
        ExperimentConfig(design="other")
    assert ExperimentConfig(design="retrain_per_replicate").fhat_ids == ("retrained",)


def test_presets():
    assert set(PRESETS) == {"paper-s3-null", "paper-s3-alt", "paper-s4-null", "paper-s4-alt",
                            "oracle-extreme"}
    for cfg in PRESETS.values():
        assert cfg.replicates == 1000
        assert cfg.n_grid[0] == (300, 300)
        assert all(n_lab * 10 == n_unlab for n_lab, n_unlab in cfg.n_grid[1:])
    assert get_preset("paper-s4-alt").beta1_star == 1.0
    assert get_preset("oracle-extreme", beta1_star=1.0, replicates=5).replicates == 5
    with pytest.raises(KeyError):
        get_preset("paper-s5")
