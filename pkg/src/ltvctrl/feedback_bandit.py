"""Exponentially weighted control over a finite cover of static feedback gains."""

import itertools
import math

import numpy as np
from scipy.special import logsumexp

from .core import Trace
from .policies import DIVERGENCE_GUARD, DivergenceError


class CoverTooLarge(ValueError):
    pass


def cover_size_bound(R_K, eps, d_x, d_u):
    return (5 * R_K / eps) ** (d_x * d_u)


def epsilon_cover(R_K, eps, d_x, d_u, member=None, cap=10 ** 6, mask=None):
    """Grid of pitch eps/sqrt(n) on [-R_K, R_K]^n, filtered by ``member``.

    n counts the free entries: all d_u*d_x of them, or those flagged in the
    boolean ``mask`` (the rest are held at zero). ``member`` defaults to the
    Frobenius ball of radius R_K. Returns (N, d_u, d_x).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mask = np.ones((d_u, d_x), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    pitch = eps / math.sqrt(n)
    kmax = int(math.floor(R_K / pitch + 1e-9))
    axis = pitch * np.arange(-kmax, kmax + 1)
    projected = len(axis) ** n
    if projected > cap:
        raise CoverTooLarge(f"grid would hold {projected} points (cap {cap}); use a larger eps")
    if member is None:
        member = lambda K: np.linalg.norm(K) <= R_K + 1e-12
    if eps >= 2 * R_K and member(np.zeros((d_u, d_x))):
        return np.zeros((1, d_u, d_x))      # any member already covers the whole ball
    pts = []
    for c in itertools.product(axis, repeat=n):
        K = np.zeros((d_u, d_x))
        K[mask] = c
        if member(K):
            pts.append(K)
    return np.array(pts).reshape(-1, d_u, d_x)


def default_window(T):
    return math.ceil(T ** 0.25)


def default_eps(T, d_x, d_u):
    return T ** (-1.0 / (2 * (d_x * d_u + 3)))


def loss_scale(L, H, R_K, C_star, R_star, R_w):
    return 8 * L * H * (R_K * C_star * R_star * R_w) ** 2


def default_eta(N, T, H, B):
    return math.sqrt(math.log(max(N, 2)) / (N * (T / H))) / B


def exp3_regret_bound(B, T, H, N):
    return 2 * B * math.sqrt((T / H) * N * math.log(max(N, 2)))


class Exp3Control:
    """Samples a gain per window with p proportional to exp(-eta * importance-weighted loss)."""

    def __init__(self, cover, eta, rng):
        self.cover = np.asarray(cover, dtype=float)
        self.N = len(self.cover)
        self.eta = float(eta)
        self.rng = rng
        self.L = np.zeros(self.N)

    def probs(self):
        z = -self.eta * self.L
        return np.exp(z - logsumexp(z))

    def draw(self):
        p = self.probs()
        k = int(self.rng.choice(self.N, p=p))
        return k, p

    def feed(self, k, p_k, window_loss):
        self.L[k] += window_loss / p_k


def exp3_control_run(instance, cover, H, eta, seed=0):
    """Play u_t = K x_t with K resampled at the start of every length-H window."""
    T, dx, du = instance.T, instance.d_x, instance.d_u
    algo = Exp3Control(cover, eta, np.random.default_rng(seed))
    X = np.zeros((T + 1, dx))
    U = np.zeros((T, du))
    C = np.zeros(T)
    X[0] = instance.x1
    rows = []
    t = 1
    n = 0
    while t <= T:
        k, p = algo.draw()
        K = algo.cover[k]
        loss = 0.0
        for _ in range(min(H, T - t + 1)):
            U[t - 1] = K @ X[t - 1]
            C[t - 1] = instance.cost.value(t, X[t - 1], U[t - 1])
            loss += C[t - 1]
            X[t] = instance.step(t, X[t - 1], U[t - 1])
            nrm = np.linalg.norm(X[t])
            if not nrm <= DIVERGENCE_GUARD:
                raise DivergenceError(t + 1, nrm)
            t += 1
        algo.feed(k, p[k], loss)
        ent = float(-np.sum(p * np.log(np.maximum(p, 1e-300))))
        rows.append((n, k, loss, ent))
        n += 1
    trace = Trace(X, U, C)
    trace.info["windows"] = rows
    trace.info["probs"] = algo.probs()
    return trace


def stability_audit(instance, cover, c_star, rho_star, horizon=None):
    """Cover indices whose closed-loop transition products break ||Phi_{s:t}(K)|| <= c* rho*^{t-s}.

    Only windows of length up to ``horizon`` (default min(T, 50)) starting at each s are checked.
    """
    T = instance.T
    horizon = min(T, 50) if horizon is None else horizon
    bad = []
    for idx, K in enumerate(cover):
        Acl = instance.A + instance.B @ K
        ok = True
        for s in range(T):
            P = np.eye(instance.d_x)
            for j in range(s, min(T, s + horizon)):
                P = Acl[j] @ P
                if np.linalg.norm(P, 2) > c_star * rho_star ** (j - s + 1) + 1e-9:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            bad.append(idx)
    return bad
