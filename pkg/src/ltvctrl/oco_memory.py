"""Online gradient descent for losses with memory, and the DRC controller built on it."""

from collections import deque

import numpy as np

from .core import Trace, markov_operators, nature_x
from .policies import PolicyParam, clip_to_ball


def ball_projection(radius, center=None):
    def project(x):
        c = 0.0 if center is None else center
        d = x - c
        n = np.linalg.norm(d)
        return x if n <= radius else c + d * (radius / n)
    return project


def box_projection(lo, hi):
    return lambda x: np.clip(x, lo, hi)


class MemOgd:
    """Projected OGD on the unary proxy f_t(x, ..., x) of a loss with memory h."""

    def __init__(self, x0, eta, h, project):
        self.x = np.array(x0, dtype=float)
        self.eta = float(eta)
        self.h = int(h)
        self.project = project
        self.history = deque([self.x.copy()] * (self.h + 1), maxlen=self.h + 1)

    def step(self, g):
        g = np.asarray(g, dtype=float)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite proxy gradient")
        self.x = self.project(self.x - self.eta * g)
        self.history.append(self.x.copy())
        return self.x


def mem_ogd_bound(D, eta, L, h, length):
    return D ** 2 / eta + 2 * eta * L ** 2 * (h + 1) ** 2.5 * length


def drc_ogd_stepsize(d_min, R_M, L, R_sys, h, T):
    return np.sqrt(d_min) * R_M ** 2 / (2 * L * R_sys ** 2 * (h + 1) ** 1.25 * np.sqrt(T))


def proxy_lipschitz(L, R_nat, R_G, R_M, m):
    return 3 * L * R_nat ** 2 * R_G ** 2 * R_M * np.sqrt(m)


def ball_diameter(m, d_x, d_u, R_M):
    return 2 * np.sqrt(m * min(d_x, d_u)) * R_M


def counterfactual_inputs(M_blocks, nat_buf, k):
    """u_{t-k}(M) = sum_j M^{[j]} n_{t-k-j}; ``nat_buf[i]`` holds n_{t-i}."""
    m = M_blocks.shape[0]
    return np.einsum("jab,jb->a", M_blocks, nat_buf[k:k + m])


def _windows(nat_buf, H, m):
    """Stack of nat_buf[i:i+m] for i = 1..H-1, shape (H-1, m, d_x)."""
    idx = np.arange(1, H)[:, None] + np.arange(m)[None, :]
    return np.asarray(nat_buf, dtype=float)[idx]


def drc_counterfactual_state(M, nat_buf, G, _win=None):
    """x_hat_t(M) = n_t + sum_{i>=1} G^{[i]} u_{t-i}(M) using every block of G past the first.

    ``nat_buf[k]`` holds the Nature's-x estimate for step t-k and must reach back
    m + h - 1 steps, where h is the number of blocks in G.
    """
    blocks = G.blocks if hasattr(G, "blocks") else np.asarray(G)
    Mb = M.blocks if hasattr(M, "blocks") else np.asarray(M)
    H, m = blocks.shape[0], Mb.shape[0]
    if len(nat_buf) < m + H - 1:
        raise ValueError(f"need {m + H - 1} Nature's-x entries, got {len(nat_buf)}")
    x = np.array(nat_buf[0], dtype=float)
    if H > 1:
        win = _windows(nat_buf, H, m) if _win is None else _win
        U = np.einsum("jab,ijb->ia", Mb, win)
        x += np.einsum("iab,ib->a", blocks[1:], U)
    return x


def proxy_loss_and_grad(M_blocks, nat_buf, G_blocks, cost, t):
    """Value and gradient of M -> c_t(x_hat_t(M), u_t(M)) by the chain rule."""
    m = M_blocks.shape[0]
    H = G_blocks.shape[0]
    win = _windows(nat_buf, H, m) if H > 1 else None
    x = drc_counterfactual_state(M_blocks, nat_buf, G_blocks, win)
    u = counterfactual_inputs(M_blocks, nat_buf, 0)
    val = float(cost.value(t, x, u))
    gx, gu = cost.grad(t, x, u)
    gx = np.asarray(gx, dtype=float).reshape(-1)
    gu = np.asarray(gu, dtype=float).reshape(-1)
    grad = np.einsum("a,jb->jab", gu, nat_buf[:m])
    if H > 1:
        # d/dM_j of G_i M_j n_{t-i-j} contributes (G_i' gx) n_{t-i-j}'
        back = np.einsum("iba,b->ia", G_blocks[1:], gx)            # (H-1, d_u)
        grad += np.einsum("ia,ijb->jab", back, win)
    return val, grad


class DrcOgd:
    """Disturbance-response controller updated by OGD on the counterfactual loss."""

    def __init__(self, d_x, d_u, m, h, R_M, eta, M0=None):
        self.d_x, self.d_u, self.m, self.h = d_x, d_u, m, h
        self.R_M, self.eta = float(R_M), float(eta)
        self.M = PolicyParam.zeros(m, d_u, d_x) if M0 is None else clip_to_ball(M0, R_M)
        # newest first: nat[k] = n_{t-k}; long enough for any operator with h+1 blocks
        self.nat = np.zeros((m + h, d_x))
        self.played = deque(maxlen=h + 1)

    def push_nat(self, n):
        self.nat[1:] = self.nat[:-1].copy()
        self.nat[0] = n

    def action(self):
        return counterfactual_inputs(self.M.blocks, self.nat, 0)

    def update(self, t, cost, G_blocks):
        _, g = proxy_loss_and_grad(self.M.blocks, self.nat, np.asarray(G_blocks), cost, t)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at t={t}")
        self.played.append(self.M)
        self.M = clip_to_ball(PolicyParam(self.M.blocks - self.eta * g), self.R_M)
        return g

    def step(self, t, nat_t, cost, G_blocks):
        """Record n_t, play u_t, then take the gradient step with c_t and G_t."""
        self.push_nat(nat_t)
        u = self.action()
        self.update(t, cost, G_blocks)
        return u

    def state_dict(self):
        return {"M": self.M.blocks.tolist(), "nat": self.nat.tolist(), "eta": self.eta}


def run_drc_ogd(instance, m, h, R_M, eta):
    """DRC-OGD on a known system: true operators with h+1 blocks and exact Nature's x."""
    T = instance.T
    nat = nature_x(instance)
    G = markov_operators(instance, h + 1)
    ctrl = DrcOgd(instance.d_x, instance.d_u, m, h, R_M, eta)
    X = np.zeros((T + 1, instance.d_x))
    U = np.zeros((T, instance.d_u))
    X[0] = instance.x1
    for t in range(1, T + 1):
        U[t - 1] = ctrl.step(t, nat[t - 1], instance.cost, G[t - 1])
        X[t] = instance.step(t, X[t - 1], U[t - 1])
    return Trace(X, U, np.asarray(instance.cost.values(X[:-1], U), dtype=float))
