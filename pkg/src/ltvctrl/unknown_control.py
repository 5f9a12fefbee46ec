"""Control of an unknown LTV system: explore in epochs, estimate the Markov operator, exploit with DRC-OGD."""

import math
from dataclasses import dataclass

import numpy as np

from .core import Trace, clip_blocks, markov_operators, nature_x, op_norm
from .estimation import AdaPred
from .oco_memory import DrcOgd, drc_ogd_stepsize


def default_h(T, rho):
    if not 0 < rho < 1:
        return 1
    return max(1, math.ceil(math.log(T) / math.log(1.0 / rho)))


def default_p(T):
    return T ** (-1.0 / 3.0)


def estimator_bound(h, d_u, R_nat, R_G, R_M):
    """Frobenius bound on the one-shot Markov estimator."""
    return math.sqrt(h * d_u) * (R_nat + R_G * max(math.sqrt(d_u), R_nat * R_M))


@dataclass
class AdaCtrlConfig:
    p: float
    h: int
    m: int
    R_M: float
    R_G: float
    R_nat: float
    eta: float = None
    seed: int = 0
    G0: np.ndarray = None          # initial estimate, (h, d_x, d_u); zero when omitted
    fixed_G: np.ndarray = None     # bypass estimation and use this operator throughout

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if self.h < 1:
            raise ValueError("h must be >= 1")


def rademacher(rng, d_u):
    return rng.choice([-1.0, 1.0], size=d_u)


def markov_estimate(x_end, U_epoch):
    """G~^{[i]} = x_{end+1} u_{end-i}' from one epoch of Rademacher inputs (rows oldest first)."""
    U = np.asarray(U_epoch)[::-1]
    return np.einsum("a,ib->iab", x_end, U)


def explore_epoch(instance, x, t0, h, rng):
    """Play h Rademacher inputs from state x at step t0; returns states, inputs and G~."""
    X = np.zeros((h + 1, instance.d_x))
    U = np.zeros((h, instance.d_u))
    X[0] = x
    for k in range(h):
        U[k] = rademacher(rng, instance.d_u)
        X[k + 1] = instance.step(t0 + k, X[k], U[k])
    return X, U, markov_estimate(X[-1], U)


def extract_nat(x_next, G_blocks, recent_inputs, R_nat):
    """Clip x_{t+1} - sum_i G^{[i]} u_{t-i} to the R_nat ball; ``recent_inputs[i]`` is u_{t-i}."""
    G_blocks = np.asarray(G_blocks)
    h = G_blocks.shape[0]
    r = np.array(x_next, dtype=float)
    k = min(h, len(recent_inputs))
    if k:
        r -= np.einsum("iab,ib->a", G_blocks[:k], np.asarray(recent_inputs[:k]))
    n = np.linalg.norm(r)
    return r if n <= R_nat else r * (R_nat / n)


def _l1op_projector(h, d_x, d_u, R_G):
    def project(Z):
        shape = Z.shape
        blocks = Z.reshape(shape[:-1] + (h, d_x, d_u))
        nrm = op_norm(blocks).sum(axis=-1)
        scale = np.minimum(1.0, R_G / np.maximum(nrm, 1e-300))
        return (blocks * scale[..., None, None, None]).reshape(shape)
    return project


def ada_ctrl_run(instance, cfg, diagnostics=True):
    T, dx, du = instance.T, instance.d_x, instance.d_u
    h, m = cfg.h, cfg.m
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    coin_rng = np.random.default_rng(seeds[0])
    input_rng = np.random.default_rng(seeds[1])
    eta = cfg.eta
    if eta is None:
        eta = drc_ogd_stepsize(min(dx, du), cfg.R_M, instance.cost.L,
                               cfg.R_G * cfg.R_M * cfg.R_nat, h, T)
    ctrl = DrcOgd(dx, du, m, h, cfg.R_M, eta)
    G0 = np.zeros((h, dx, du)) if cfg.G0 is None else clip_blocks(np.asarray(cfg.G0, dtype=float), cfg.R_G)
    R_tilde = estimator_bound(h, du, cfg.R_nat, cfg.R_G, cfg.R_M)
    pred = None
    if cfg.fixed_G is None:
        pred = AdaPred(h * dx * du, max(cfg.p, 1e-12), math.sqrt(min(dx, du)) * cfg.R_G, R_tilde,
                       z0=G0.reshape(-1), project=_l1op_projector(h, dx, du, cfg.R_G))

    X = np.zeros((T + 1, dx))
    U = np.zeros((T, du))
    nat_hat = np.zeros((T + 1, dx))
    flags = np.zeros(T, dtype=bool)
    G_used = np.zeros((T, h, dx, du)) if diagnostics else None
    X[0] = instance.x1
    nat_hat[0] = instance.x1
    n_full = T // h
    epochs = []
    t = 1
    tau = 0
    while t <= T:
        tau += 1
        full = tau <= n_full
        if cfg.fixed_G is not None:
            G_hat = np.asarray(cfg.fixed_G, dtype=float)
        else:
            G_hat = pred.predict()[0].reshape(h, dx, du)
        b = bool(full and coin_rng.random() < cfg.p)
        t0 = t
        for _ in range(h if full else T - t + 1):
            ctrl.push_nat(nat_hat[t - 1])
            u = rademacher(input_rng, du) if b else ctrl.action()
            U[t - 1] = u
            X[t] = instance.step(t, X[t - 1], u)
            lo = max(0, t - h)
            nat_hat[t] = extract_nat(X[t], G_hat, U[lo:t][::-1], cfg.R_nat)
            ctrl.update(t, instance.cost, G_hat)
            flags[t - 1] = b
            if diagnostics:
                G_used[t - 1] = G_hat
            t += 1
        G_tilde = markov_estimate(X[t - 1], U[t0 - 1:t - 1]) if b else None
        if pred is not None and full:
            pred.update(np.array([b]), None if G_tilde is None else G_tilde.reshape(1, -1))
        epochs.append({"tau": tau, "start": t0, "explored": b, "G_hat": G_hat, "G_tilde": G_tilde})

    trace = Trace(X, U, np.asarray(instance.cost.values(X[:-1], U), dtype=float),
                  explore_flags=flags, nat_estimates=nat_hat)
    trace.info["epochs"] = epochs
    trace.info["eta"] = eta
    if diagnostics:
        G_true = markov_operators(instance, h)
        trace.info["G_err"] = op_norm(G_used - G_true).sum(axis=1)
        trace.info["nat_err"] = np.linalg.norm(nat_hat - nature_x(instance), axis=1)
    return trace
