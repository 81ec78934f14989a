import math

import numpy as np
import pytest

from bpdq.errors import ConvergenceError
from bpdq.experiments import gen_sparse_signal, snr_db
from bpdq.prox import lp_norm
from bpdq.quantize import epsilon_2_variance, epsilon_p, quantize
from bpdq.sensing import estimate_frame_bounds, make_partial_fourier, make_sgr
from bpdq.solver import DecoderConfig, decode, decode_bpdn, decode_bpdq, decode_tv

FAST = dict(outer_iters=20_000, early_exit_tol=1e-9, inner_tol=1e-8, inner_cap=20_000,
            inner_accelerated=True)


def instance(m=64, N=128, K=4, seed=5, scale=100.0, ratio=40.0):
    op = make_sgr(m, N, seed)
    x = scale * gen_sparse_signal(N, K, seed)
    y = op.apply(x)
    alpha = np.max(np.abs(y)) / ratio
    return op, x, quantize(y, alpha), alpha


def test_config_validation():
    for bad in (dict(p=1.5), dict(epsilon=-1), dict(gamma=0), dict(outer_iters=0),
                dict(regularizer="l2"), dict(alpha_t=2.0), dict(alpha_t=[1.0, 0.0])):
        with pytest.raises(ValueError):
            DecoderConfig(**bad)
    cfg = DecoderConfig(alpha_t=[0.5, 1.5])
    assert cfg.relaxation(0) == 0.5 and cfg.relaxation(10) == 1.5
    assert DecoderConfig().to_dict()["gamma"] == 1.0


def test_basis_pursuit_limit():
    op = make_sgr(64, 128, 1)
    x = gen_sparse_signal(128, 4, 1)
    res = decode_bpdq(op, op.apply(x), DecoderConfig(p=2, epsilon=0.0, gamma=0.01, **FAST))
    assert snr_db(x, res.x_hat) > 100


@pytest.mark.parametrize("p", [2.0, 4.0, math.inf])
def test_zero_measurements(p):
    op = make_sgr(20, 50, 2)
    res = decode_bpdq(op, np.zeros(20), DecoderConfig(p=p, epsilon=0.5))
    assert np.array_equal(res.x_hat, np.zeros(50)) and res.converged


def test_bpdn_alias_bit_identical():
    op, x, yq, alpha = instance()
    cfg = DecoderConfig(p=2, epsilon=epsilon_2_variance(64, alpha), gamma=1.0, outer_iters=60)
    a, b = decode_bpdn(op, yq, cfg), decode_bpdq(op, yq, cfg)
    assert np.array_equal(a.x_hat, b.x_hat) and a.summary() == b.summary()
    with pytest.raises(ValueError):
        decode_bpdn(op, yq, DecoderConfig(p=4, epsilon=1.0))


def test_bpdn_with_variance_radius():
    op, x, yq, alpha = instance()
    eps = epsilon_2_variance(64, alpha)
    assert lp_norm(yq - op.apply(x), 2) <= eps
    res = decode_bpdn(op, yq, DecoderConfig(p=2, epsilon=eps, **FAST))
    assert res.converged and res.residual_norm_p <= eps * (1 + 1e-5)
    assert res.objective <= 1.001 * np.abs(x).sum()


@pytest.mark.parametrize("p", [2.0, 4.0, 10.0])
def test_feasibility_and_minimality(p):
    op, x, yq, alpha = instance(seed=7)
    eps = epsilon_p(p, 64, alpha).epsilon
    res = decode_bpdq(op, yq, DecoderConfig(p=p, epsilon=eps, **FAST))
    assert res.converged
    assert res.residual_norm_p <= eps * (1 + 1e-5)
    if lp_norm(yq - op.apply(x), p) <= eps:
        assert res.objective <= np.abs(x).sum() + 1e-3 * np.abs(x).sum()
    # any other feasible point: a shrunk copy of the truth moved into the tube
    assert res.objective <= np.abs(res.x_hat).sum() + 1e-12


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_gamma_invariance(p):
    op, x, yq, alpha = instance()
    eps = epsilon_p(p, 64, alpha).epsilon
    bounds = estimate_frame_bounds(op)
    sols = [decode_bpdq(op, yq, DecoderConfig(p=p, epsilon=eps, gamma=g, **FAST), bounds).x_hat
            for g in (0.5, 1.0, 2.0)]
    for s in sols:
        assert np.linalg.norm(s - sols[1]) <= 1e-4 * np.linalg.norm(sols[1])


def test_dr_residual_falls_below_threshold():
    op, x, yq, alpha = instance(seed=9)
    eps = epsilon_p(4, 64, alpha).epsilon
    res = decode_bpdq(op, yq, DecoderConfig(p=4, epsilon=eps, gamma=1.0, outer_iters=500,
                                            inner_accelerated=True))
    assert res.last_change < 1e-6 * max(1.0, np.linalg.norm(x))


def test_determinism():
    op, x, yq, alpha = instance(seed=3)
    cfg = DecoderConfig(p=4, epsilon=epsilon_p(4, 64, alpha).epsilon, outer_iters=50)
    a, b = decode_bpdq(op, yq, cfg), decode_bpdq(op, yq, cfg)
    assert np.array_equal(a.x_hat, b.x_hat) and a.summary() == b.summary()


def test_result_metadata():
    op, x, yq, alpha = instance()
    res = decode_bpdq(op, yq, DecoderConfig(p=2, epsilon=1.0, outer_iters=3))
    s = res.summary()
    assert "x_hat" not in s and s["outer_iterations_run"] == 3
    assert s["metadata"]["init"] == "adjoint/c2" and s["metadata"]["gamma"] == 1.0
    assert set(s["inner_iteration_stats"]) == {"calls", "total", "max", "mean"}


def test_inner_failure_propagates():
    op, x, yq, alpha = instance()
    with pytest.raises(ConvergenceError, match="DR iteration"):
        decode_bpdq(op, yq, DecoderConfig(p=10, epsilon=1e-3, inner_cap=1, inner_tol=1e-14))


def test_decoder_regularizer_checks():
    op, x, yq, alpha = instance()
    with pytest.raises(ValueError):
        decode_bpdq(op, yq, DecoderConfig(regularizer="tv"))
    with pytest.raises(ValueError):
        decode_tv(op, yq, DecoderConfig(regularizer="l1"))
    with pytest.raises(ValueError):
        decode(op, yq, DecoderConfig(regularizer="tv"))


def test_tv_constant_image_exact():
    side = 8
    op = make_partial_fourier(side * side, np.arange(side * side))
    x = np.full(side * side, 2.5)
    res = decode_tv(op, op.apply(x), DecoderConfig(p=2, epsilon=0.0, regularizer="tv",
                                                   outer_iters=50))
    assert np.max(np.abs(res.x_hat - x)) < 1e-8


def test_tv_infeasible_zero_radius():
    side = 8
    op = make_partial_fourier(side * side, np.array([0, 3, 9, 17]))
    y = np.random.default_rng(0).standard_normal(op.m)
    y[op.m // 2] = 1.0  # imaginary part of the DC coefficient: no real signal matches it
    res = decode_tv(op, y, DecoderConfig(p=2, epsilon=0.0, regularizer="tv", outer_iters=40))
    assert not res.converged


def test_tv_fourier_recovery_is_feasible():
    side = 32
    from bpdq.experiments import gen_angiogram
    from bpdq.sensing import random_omega
    img = gen_angiogram(side, n_ellipses=3, seed=1)
    op = make_partial_fourier(side * side, random_omega(side * side, 128, 1, include_dc=True))
    y = quantize(op.apply(img.ravel()), 0.05)
    eps = epsilon_p(4, op.m, 0.05).epsilon
    res = decode_tv(op, y, DecoderConfig(p=4, epsilon=eps, regularizer="tv", gamma=0.1,
                                          outer_iters=500))
    assert res.converged and res.residual_norm_p <= eps * (1 + 1e-5)
    assert res.inner_iteration_stats["total"] == 0
