import json
import math

import numpy as np
import pytest
from scipy import ndimage, stats

from bpdq.errors import GenerationError
from bpdq.experiments import (HIST_EDGES, ExperimentSpec, gen_angiogram, gen_sparse_signal,
                              metrics, paired_gain, run_experiment_1d, run_experiment_tv, snr_db)
from bpdq.quantize import quantize
from bpdq.sensing import make_partial_fourier, make_sgr
from bpdq.solver import DecoderConfig, decode_tv


def test_sparse_signal_basics():
    x = gen_sparse_signal(64, 5, 3)
    assert np.count_nonzero(x) == 5
    assert np.array_equal(x, gen_sparse_signal(64, 5, 3))
    assert not np.array_equal(x, gen_sparse_signal(64, 5, 4))
    assert np.count_nonzero(gen_sparse_signal(10, 0, 1)) == 0
    with pytest.raises(ValueError):
        gen_sparse_signal(4, 5, 0)


def test_sparse_support_uniform():
    counts = np.zeros(64)
    for s in range(1000):
        counts += gen_sparse_signal(64, 8, s) != 0
    assert stats.chisquare(counts).pvalue > 0.01


def test_sparse_values_gaussian():
    vals = np.concatenate([gen_sparse_signal(64, 16, s)[gen_sparse_signal(64, 16, s) != 0]
                           for s in range(300)])
    assert stats.kstest(vals, "norm").pvalue > 0.01


@pytest.mark.parametrize("seed", range(6))
def test_angiogram_structure(seed):
    img = gen_angiogram(64, 10, seed, intensity=2.5)
    assert set(np.unique(img)) <= {0.0, 2.5}
    # a one-pixel gap separates ellipses, so each one is its own 4-connected blob
    _, count = ndimage.label(img > 0)
    assert count == 10
    assert np.array_equal(img, gen_angiogram(64, 10, seed, intensity=2.5))


def test_angiogram_area_fraction():
    frac = np.mean([gen_angiogram(64, 10, s).mean() for s in range(100)])
    assert 0.005 < frac < 0.40


def test_angiogram_errors():
    with pytest.raises(GenerationError):
        gen_angiogram(32, 200, 0, max_attempts=500)
    with pytest.raises(ValueError):
        gen_angiogram(16, 2, 0)


def test_metrics_examples():
    op = make_sgr(30, 60, 1)
    x = gen_sparse_signal(60, 4, 1)
    alpha = 0.1
    y = quantize(op.apply(x), alpha)
    rep = metrics(x, x, op, y, alpha)
    assert rep.snr_db == math.inf and rep.qc_fraction == 1.0 and rep.inside_half == 30
    assert rep.residual_histogram.sum() + rep.hist_outside == 30
    assert metrics(x, np.zeros(60), op, y, alpha).snr_db == 0.0
    assert snr_db(x, x + 1e-3 * x) == pytest.approx(60.0)
    with pytest.raises(ValueError):
        metrics(x, x[:-1], op, y, alpha)
    assert HIST_EDGES.size == 42 and HIST_EDGES[0] == -1.025


def test_qc_is_strict():
    op = make_sgr(1, 1, 0)
    x = np.array([0.0])
    y = op.apply(x) + 0.5
    assert metrics(x, x, op, y, 1.0).qc_fraction == 0.0
    assert metrics(x, x, op, y, 1.0).inside_half == 1


def test_spec_validation():
    bad = [dict(kind="2d"), dict(trials=0), dict(p_list=[1.5]), dict(p_list=[]),
           dict(alpha_rule={"fixed": -1}), dict(alpha_rule={"median": 3}),
           dict(kappa=-1), dict(K=0), dict(m_over_K=[]), dict(decoder={"nope": 1}),
           dict(decoder={"gamma": -1}), dict(kind="tv", side=48),
           dict(kind="tv", alpha_rule={"fraction-of-max": 40}), dict(kind="tv", rho=0.3),
           dict(failure_budget=2), dict(workers=0)]
    for kw in bad:
        with pytest.raises(ValueError):
            ExperimentSpec(**kw)
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"trails": 3})
    with pytest.raises(ValueError):
        ExperimentSpec.from_json("[1, 2]")
    with pytest.raises(ValueError):
        ExperimentSpec.from_json("{oops")
    spec = ExperimentSpec.from_json(json.dumps({"trials": 3, "p_list": [2, 10]}))
    assert spec.p_list == [2.0, 10.0] and spec.alpha_rule == {"fraction-of-max": 40.0}
    assert ExperimentSpec(kind="tv").alpha_rule == {"fixed": 50.0}
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec


def small_1d(**kw):
    base = dict(N=128, K=4, m_over_K=[10], p_list=[2, 4], trials=3, seed=11)
    base.update(kw)
    return ExperimentSpec(**base)


def test_small_sweep_outputs():
    res = run_experiment_1d(small_1d())
    cells = res.cells()
    assert [(c["m_over_K"], c["p"]) for c in cells] == [(10, 2.0), (10, 4.0)]
    for c in cells:
        assert c["trials"] == 3 and c["failed"] == 0 and 0 <= c["qc_mean"] <= 1
    hist = res.histograms()
    assert len(hist) == 2 * 41
    assert sum(h["count"] for h in hist) <= 2 * 3 * 40
    text = res.cells_csv()
    assert text.startswith("# std columns use the unbiased (n-1) estimator")
    assert "elapsed" not in text and "wall" not in res.trials_csv()
    man = res.manifest()
    assert man["master_seed"] == 11 and man["randomized_per_trial"] == ["signal", "matrix"]
    assert {"numpy", "scipy", "python"} <= set(man["versions"])
    json.dumps(man)
    gain, pval = paired_gain(res, 4, 2)
    assert gain == pytest.approx(np.mean(res.snr(4) - res.snr(2)))
    assert 0 <= pval <= 1


def test_sweep_deterministic_and_worker_independent():
    a = run_experiment_1d(small_1d())
    b = run_experiment_1d(small_1d(workers=2))
    assert a.cells_csv() == b.cells_csv()
    assert a.histograms_csv() == b.histograms_csv() and a.trials_csv() == b.trials_csv()


def test_instances_shared_across_p():
    res = run_experiment_1d(small_1d(trials=2))
    seeds = {(t["trial"], t["p"]): t["seed"] for t in res.trials}
    assert seeds[(0, 2.0)] == seeds[(0, 4.0)] != seeds[(1, 2.0)]


def test_failures_are_recorded():
    res = run_experiment_1d(small_1d(trials=2, p_list=[10],
                                     decoder={"inner_cap": 1, "inner_tol": 1e-15,
                                              "inner_accelerated": False}))
    assert res.failed == 2 and res.failure_fraction() == 1.0
    assert res.cells()[0]["failed"] == 2 and math.isnan(res.cells()[0]["snr_mean_db"])
    assert all(t["error"].startswith("ConvergenceError") for t in res.trials)
    assert "nan" in res.trials_csv()


def test_runner_kind_checks():
    with pytest.raises(ValueError):
        run_experiment_1d(ExperimentSpec(kind="tv"))
    with pytest.raises(ValueError):
        run_experiment_tv(small_1d())


def test_small_tv_sweep():
    spec = ExperimentSpec(kind="tv", side=32, trials=2, p_list=[2, 10], seed=4,
                          n_ellipses=4)
    res = run_experiment_tv(spec)
    cells = res.cells()
    assert [c["p"] for c in cells] == [2.0, 10.0]
    assert cells[0]["gain_mean_db"] == 0.0 and "gain_mean_db" in res.cells_csv()
    assert all(t["m"] == 128 for t in res.trials)
    assert res.manifest()["randomized_per_trial"] == ["image", "omega"]


def test_tv_full_sampling_noiseless():
    side = 32
    img = gen_angiogram(side, 5, 2).ravel()
    op = make_partial_fourier(side * side, np.arange(side * side))
    res = decode_tv(op, op.apply(img), DecoderConfig(p=2, epsilon=0.0, regularizer="tv",
                                                     outer_iters=20))
    assert snr_db(img, res.x_hat) > 100


def test_tv_coarse_quantization_degrades():
    snrs = []
    for alpha in (50.0, 150.0, 300.0, 700.0):
        spec = ExperimentSpec(kind="tv", side=32, trials=2, p_list=[2], seed=8, n_ellipses=4,
                              alpha_rule={"fixed": alpha}, calibration_alpha=50.0)
        snrs.append(run_experiment_tv(spec).cells()[0]["snr_mean_db"])
    assert all(b < a for a, b in zip(snrs, snrs[1:])), snrs
