import math

import numpy as np
import pytest

from ltvctrl.estimation import (AdaPred, BaseEstimator, NoisyOracle, base_bound,
                                estimation_regret, project_ball, run_ada_pred,
                                strong_adaptivity_instance, working_set, working_set_audit)


def test_working_set_examples():
    assert working_set(1) == [1]
    S = working_set(100)
    assert 1 not in S and 96 in S and S[-1] == 100
    with pytest.raises(ValueError):
        working_set(0)


def test_working_set_audit_small():
    assert working_set_audit(4096) == []


def test_base_estimator_steps():
    est = BaseEstimator(np.array([0.2, -0.1]), 0.5, 10.0)
    assert np.array_equal(est.step(False), [0.2, -0.1])
    np.testing.assert_array_equal(est.z, [0.2, -0.1])
    est = BaseEstimator(np.zeros(2), 1.0, 10.0)
    est.step(True, np.array([0.3, 0.4]))
    np.testing.assert_allclose(est.z, [0.3, 0.4])
    with pytest.raises(ValueError):
        est.step(True)


def test_base_estimator_rate_on_constant_target():
    T, p, seeds = 10 ** 4, 0.5, 100
    z_star = np.array([0.5])
    rng = np.random.default_rng(0)
    oracle = NoisyOracle(np.tile(z_star, (T, 1)), 0.5, rng)
    errs = []
    for _ in range(seeds):
        est = BaseEstimator(np.zeros(1), p, 1.0)
        flags = rng.random(T) < p
        # the target is constant, so one batched query stands in for all T answers
        answers = NoisyOracle(z_star[None], 0.5, rng, batch=T).query(1)
        for t in range(T):
            est.step(flags[t], answers[t])
        errs.append(np.sum((est.z - z_star) ** 2))
    R = 1.0 + oracle.bound
    assert np.mean(errs) <= 10 * R ** 2 * (1 + math.log(T)) / (p * T)
    assert base_bound(1.0, 1.0, p, 1.0, T) > 0


def test_ada_pred_first_prediction_and_no_queries():
    z0 = np.array([0.3, -0.2])
    est = AdaPred(2, 0.3, 1.0, 1.0, z0=z0)
    np.testing.assert_allclose(est.predict()[0], z0)
    for _ in range(200):
        est.update(np.array([False]))
        np.testing.assert_allclose(est.predict()[0], z0, atol=1e-12)


def test_pool_weights_and_keys():
    rng = np.random.default_rng(1)
    T = 600
    targets = np.where(np.arange(T)[:, None] < T // 2, 0.5, -0.5) * np.ones((T, 2))
    oracle = NoisyOracle(targets, 0.3, rng, batch=3)
    est = AdaPred(2, 0.4, 1.0, oracle.bound, batch=3)
    for t in range(1, T + 1):
        b = rng.random(3) < 0.4
        est.update(b, oracle.query(t) if b.any() else None)
        np.testing.assert_allclose(est.weights.sum(axis=1), 1.0, atol=1e-12)
        assert est.births == working_set(t + 1)


def test_oracle_unbiased():
    rng = np.random.default_rng(2)
    z = np.array([[0.4, -0.3, 0.1]])
    oracle = NoisyOracle(z, 0.8, rng, batch=20000)
    draws = oracle.query(1)
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - z[0]) <= 3 * se)
    assert np.all(np.linalg.norm(draws, axis=1) <= oracle.bound + 1e-12)


def test_surrogate_unbiased_and_second_moment():
    rng = np.random.default_rng(3)
    p, R_z, noise, n = 0.3, 1.0, 0.5, 200000
    z_star = np.array([0.6, -0.2])
    z = np.array([-0.1, 0.4])
    oracle = NoisyOracle(z_star[None], noise, rng, batch=n)
    zt = oracle.query(1)
    b = rng.random(n) < p
    loss = np.where(b, BaseEstimator.surrogate(z, zt, p), 0.0)
    grad = np.where(b[:, None], BaseEstimator.gradient(z, zt, p), 0.0)
    # E[noise^2] for a uniform ball of radius r in d dims is r^2 d/(d+2)
    expect = 0.5 * np.sum((z - z_star) ** 2) + 0.5 * noise ** 2 * 2 / 4
    assert abs(loss.mean() - expect) <= 3 * loss.std(ddof=1) / math.sqrt(n)
    se = grad.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(grad.mean(axis=0) - (z - z_star)) <= 3 * se)
    R_tilde = np.linalg.norm(z_star) + noise
    assert np.mean(np.sum(grad ** 2, axis=1)) <= (R_z + R_tilde) ** 2 / p


def test_query_count_concentrates():
    T, p, seeds = 2000, 0.2, 200
    rng = np.random.default_rng(4)
    oracle = NoisyOracle(np.zeros((T, 1)), 0.1, rng, batch=seeds)
    _, flags = run_ada_pred(oracle, T, 1, p, 1.0, 0.1, rng, batch=seeds)
    dev = np.abs(flags.sum(axis=1) - p * T)
    assert np.mean(dev <= 4 * math.sqrt(p * T * (1 - p))) >= 0.99


def test_strong_adaptivity_blocks():
    targets, blocks = strong_adaptivity_instance(2.0, 100, seed=0)
    assert blocks == [(1, 100)]
    assert len(np.unique(targets)) == 1
    targets, blocks = strong_adaptivity_instance(1.0, 10 ** 4, seed=1)
    assert len(blocks) == 100 and all(s - r + 1 == 100 for r, s in blocks)
    assert set(np.unique(targets)) <= {-1.0, 1.0}


def test_estimation_regret_accounting():
    rng = np.random.default_rng(5)
    T = 40
    preds = rng.normal(size=(1, T, 1)) * 0.3
    targets = rng.normal(size=(T, 1)) * 0.5
    flags = rng.random((1, T)) < 0.3
    I, lam = (5, 30), 0.7
    grid = np.linspace(-1, 1, 200001)
    seg = targets[4:30, 0]
    best = np.min(np.sum((grid[:, None] - seg[None]) ** 2, axis=1))
    expect = np.sum((preds[0, 4:30, 0] - seg) ** 2) - best + lam * flags[0, 4:30].sum()
    assert estimation_regret(preds, targets, flags, I, lam, radius=1.0)[0] == pytest.approx(expect, abs=1e-6)


def test_project_ball():
    Z = np.array([[3.0, 4.0], [0.1, 0.0]])
    np.testing.assert_allclose(project_ball(Z, 1.0), [[0.6, 0.8], [0.1, 0.0]])
