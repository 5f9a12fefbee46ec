import numpy as np
import pytest

from ltvctrl.core import (DimensionError, LtvInstance, MarkovOperator, markov_operator,
                          markov_operators, nature_x, nature_x_closed_form, op_norm, psi,
                          simulate, total_variability, variability, verify_assumptions,
                          zero_controller)
from ltvctrl.costs import QuadraticTracking
from ltvctrl.instances import gen_dsigma, gen_separation


def random_instance(rng, T, dx, du, scale=0.5):
    A = rng.normal(size=(T, dx, dx)) * scale / np.sqrt(dx)
    B = rng.normal(size=(T, dx, du))
    w = rng.normal(size=(T, dx))
    return LtvInstance(A, B, w, QuadraticTracking(np.eye(dx), np.eye(du), T))


def test_zero_system_gives_zero_trajectory():
    T = 10
    inst = LtvInstance(np.zeros((T, 2, 2)), np.zeros((T, 2, 1)), np.zeros((T, 2)),
                       QuadraticTracking(np.eye(2), np.eye(1), T))
    tr = simulate(inst, zero_controller(inst))
    assert not tr.states.any()
    assert not tr.costs.any()


def test_zero_dynamics_pass_disturbance_through():
    rng = np.random.default_rng(0)
    T = 20
    w = rng.normal(size=(T, 3))
    inst = LtvInstance(np.zeros((T, 3, 3)), rng.normal(size=(T, 3, 2)), w,
                       QuadraticTracking(np.eye(3), np.eye(2), T))
    tr = simulate(inst, zero_controller(inst))
    np.testing.assert_array_equal(tr.states[1:], w)


def test_simulate_matches_naive_recursion_bitwise():
    rng = np.random.default_rng(1)
    T = 50
    inst = random_instance(rng, T, 3, 3)
    U = rng.normal(size=(T, 3))
    tr = simulate(inst, lambda t, xs, us: U[t - 1])
    x = np.zeros(3)
    for t in range(T):
        x = inst.A[t] @ x + inst.B[t] @ U[t] + inst.w[t]
        assert np.array_equal(x, tr.states[t + 1])
    assert tr.replay_error(inst) == 0.0


def test_controller_sees_history_only():
    rng = np.random.default_rng(2)
    inst = random_instance(rng, 6, 2, 1)
    seen = []

    def ctrl(t, xs, us):
        seen.append((t, len(xs), len(us)))
        return np.zeros(1)

    simulate(inst, ctrl)
    assert seen == [(t, t, t - 1) for t in range(1, 7)]


def test_dimension_error_names_step():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, 5, 2, 2)
    with pytest.raises(DimensionError, match="t=3"):
        simulate(inst, lambda t, xs, us: np.zeros(2 if t != 3 else 3))
    B = [np.zeros((2, 1))] * 4 + [np.zeros((2, 2))]
    with pytest.raises(DimensionError, match="t=5"):
        LtvInstance(np.zeros((5, 2, 2)), B, np.zeros((5, 2)), QuadraticTracking(np.eye(2), np.eye(1), 5))


def test_nature_x_two_routes_agree():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, 30, 3, 2, scale=0.9)
    a, b = nature_x(inst), nature_x_closed_form(inst)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))
    np.testing.assert_array_equal(a, simulate(inst, zero_controller(inst)).states)


def test_nature_x_on_z2_is_one():
    S = gen_separation("Z2", 50)
    nat = nature_x(S.instance)
    np.testing.assert_allclose(nat[1:, 0], 1.0)


def test_markov_operator_blocks():
    rng = np.random.default_rng(5)
    inst = random_instance(rng, 12, 2, 2)
    G1 = markov_operator(inst, 7, 1)
    np.testing.assert_array_equal(G1.blocks[0], inst.B[6])
    G = markov_operator(inst, 5, 3)
    # impulse at step t - i, read the state at t + 1
    for i in range(3):
        for j in range(2):
            x = np.zeros(2)
            for s in range(5 - i, 6):
                u = np.eye(2)[j] if s == 5 - i else np.zeros(2)
                x = inst.A[s - 1] @ x + inst.B[s - 1] @ u
            np.testing.assert_allclose(G.blocks[i][:, j], x, atol=1e-14)


def test_markov_operator_needs_history():
    rng = np.random.default_rng(6)
    inst = random_instance(rng, 10, 2, 1)
    with pytest.raises(ValueError, match="history"):
        markov_operator(inst, 3, 4)
    with pytest.raises(ValueError):
        markov_operator(inst, 11, 1)


def test_batched_operators_match_single():
    rng = np.random.default_rng(7)
    inst = random_instance(rng, 15, 3, 2)
    G = markov_operators(inst, 4)
    for t in range(4, 16):
        np.testing.assert_allclose(G[t - 1], markov_operator(inst, t, 4).blocks, atol=1e-14)
    # blocks reaching before t = 1 are zero
    assert not G[1, 2:].any()


def test_dsigma_operator_has_only_first_block():
    inst, _ = gen_dsigma(0.1, 20, 0)
    G = markov_operator(inst, 10, 3)
    np.testing.assert_array_equal(G.blocks[0], inst.B[9])
    assert not G.blocks[1:].any()


def test_operator_telescoping():
    rng = np.random.default_rng(8)
    T = 40
    inst = random_instance(rng, T, 3, 2)
    U = rng.normal(size=(T, 2))
    tr = simulate(inst, lambda t, xs, us: U[t - 1])
    nat = nature_x(inst)
    G = markov_operators(inst, T)
    for t in range(1, T + 1):
        x = nat[t] + sum(G[t - 1, i] @ U[t - 1 - i] for i in range(t))
        assert np.linalg.norm(x - tr.states[t]) <= 1e-10 * max(1.0, np.linalg.norm(tr.states[t]))


def test_psi():
    assert psi(0, 3.0, 0.4) == 3.0
    assert psi(1, 2.0, 0.0) == 0.0
    assert psi(3, 1.0, 0.5) == 0.125
    assert psi(4, 1.0, 0.7) <= psi(3, 1.0, 0.7)
    with pytest.raises(ValueError):
        psi(1, 1.0, 1.0)


def test_verify_assumptions_cases():
    inst, _ = gen_dsigma(0.125, 100, 0)
    rep = verify_assumptions(inst, 1.0, 0.0, 4.0)
    assert rep.ok and rep.R_G <= 2.0 and rep.R_nat == 4.0

    T = 20
    grow = LtvInstance(np.full((T, 1, 1), 1.1), np.ones((T, 1, 1)), np.zeros((T, 1)),
                       QuadraticTracking(np.eye(1), np.eye(1), T))
    rep = verify_assumptions(grow, 1.0, 0.9, 1.0)
    assert not rep.ok and rep.violation[0] == "transition" and rep.violation[2] == 1

    rng = np.random.default_rng(9)
    A = rng.normal(size=(T, 3, 3))
    A *= 0.5 / op_norm(A)[:, None, None]
    inst = LtvInstance(A, rng.normal(size=(T, 3, 1)), np.zeros((T, 3)),
                       QuadraticTracking(np.eye(3), np.eye(1), T))
    rep = verify_assumptions(inst, 1.0, 0.5, 1.0)
    assert rep.ok and rep.R_nat == 2.0


def test_psi_dominates_operator_tail():
    rng = np.random.default_rng(10)
    T = 60
    A = rng.normal(size=(T, 2, 2))
    A *= 0.6 / op_norm(A)[:, None, None]
    B = rng.normal(size=(T, 2, 2))
    B /= np.maximum(1.0, op_norm(B))[:, None, None]
    inst = LtvInstance(A, B, np.zeros((T, 2)), QuadraticTracking(np.eye(2), np.eye(2), T))
    rep = verify_assumptions(inst, 1.0, 0.6, 1.0)
    assert rep.ok
    G = markov_operators(inst, T)
    for t in (10, 30, 60):
        for h in (1, 2, 5, 8):
            tail = op_norm(G[t - 1, h:t]).sum()
            assert tail <= psi(h, rep.R_G, 0.6) + 1e-12


def test_variability_examples():
    G = np.ones((5, 2, 2, 1))
    assert variability(G, (1, 5)) == 0.0
    g = np.random.default_rng(11).normal(size=(2, 2, 1))
    np.testing.assert_allclose(variability(np.stack([g, -g]), (1, 2)), np.sum(g ** 2))
    ops = [MarkovOperator(g), MarkovOperator(-g)]
    np.testing.assert_allclose(variability(ops, (1, 2)), np.sum(g ** 2))
    with pytest.raises(ValueError):
        variability(G, (3, 2))


def test_variability_matches_grid_minimum():
    rng = np.random.default_rng(12)
    for _ in range(5):
        g = rng.uniform(-1, 1, size=7)
        grid = np.linspace(-1, 1, 200001)
        brute = np.min(np.mean((grid[:, None] - g[None]) ** 2, axis=1))
        assert abs(variability(g.reshape(7, 1, 1, 1), (1, 7)) - brute) <= 1e-6


def test_total_variability():
    rng = np.random.default_rng(13)
    G = rng.normal(size=(30, 2, 1, 1))
    assert total_variability(G, (4, 20)) == pytest.approx(17 * variability(G, (4, 20)))
    for _ in range(50):
        r, s = sorted(rng.integers(1, 31, size=2))
        a = int(rng.integers(r, s + 1))
        b = int(rng.integers(a, s + 1))
        assert total_variability(G, (a, b)) <= total_variability(G, (r, s)) + 1e-12


def test_dsigma_variability_bounded_by_sigma_squared():
    sigma, T = 0.1, 10 ** 4
    inst, _ = gen_dsigma(sigma, T, 3)
    v = variability(markov_operators(inst, 1), (1, T))
    # only the beta entry varies: Var = sigma^2/3 in expectation
    assert v <= sigma ** 2 + 3 * sigma ** 2 / np.sqrt(T)


def test_json_roundtrip():
    rng = np.random.default_rng(14)
    inst = random_instance(rng, 8, 2, 3)
    back = LtvInstance.from_json(inst.to_json())
    for name in ("A", "B", "w", "x1"):
        np.testing.assert_array_equal(getattr(back, name), getattr(inst, name))
    X = rng.normal(size=(8, 2))
    U = rng.normal(size=(8, 3))
    np.testing.assert_array_equal(back.cost.values(X, U), inst.cost.values(X, U))


def test_instance_is_read_only():
    rng = np.random.default_rng(15)
    inst = random_instance(rng, 4, 2, 1)
    with pytest.raises(ValueError):
        inst.A[0, 0, 0] = 1.0
