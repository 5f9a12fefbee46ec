"""DRC, DAC and feedback policies over the parameter ball M(m, R_M)."""

import enum

import numpy as np

from .core import Trace, clip_blocks, l1_op_norm, nature_x


class PolicyKind(enum.Enum):
    DRC = "drc"
    DAC = "dac"
    FEEDBACK = "feedback"


class DivergenceError(ArithmeticError):
    def __init__(self, t, norm):
        super().__init__(f"state norm {norm:.3g} exceeded the overflow guard at t={t}")
        self.t = t


DIVERGENCE_GUARD = 1e12


class PolicyParam:
    """Blocks M^{[0]}, ..., M^{[m-1]}, each d_u by d_x."""

    def __init__(self, blocks):
        self.blocks = np.asarray(blocks, dtype=float)
        if self.blocks.ndim != 3:
            raise ValueError("blocks must be (m, d_u, d_x)")

    @classmethod
    def zeros(cls, m, d_u, d_x):
        return cls(np.zeros((m, d_u, d_x)))

    @classmethod
    def from_vec(cls, v, m, d_u, d_x):
        return cls(np.asarray(v, dtype=float).reshape(m, d_u, d_x))

    @property
    def m(self):
        return self.blocks.shape[0]

    def vec(self):
        return self.blocks.reshape(-1)

    def l1_op_norm(self):
        return l1_op_norm(self.blocks)

    def in_ball(self, R_M, tol=0.0):
        return self.l1_op_norm() <= R_M + tol

    def to_dict(self):
        return {"m": self.m, "blocks": self.blocks.tolist()}

    @classmethod
    def from_dict(cls, d):
        p = cls(d["blocks"])
        if p.m != d["m"]:
            raise ValueError("memory m disagrees with the number of blocks")
        return p

    def __repr__(self):
        return f"PolicyParam(m={self.m}, shape={self.blocks.shape[1:]})"


def clip_to_ball(M, R_M):
    return PolicyParam(clip_blocks(M.blocks, R_M))


def policy_action(kind, M, signal, t):
    """u_t = sum_i M^{[i]} s_{t-i}; ``signal[k-1]`` is s_k and steps below 1 read as zero.

    The signal is Nature's x for DRC, the disturbances for DAC and the realized
    states for feedback.
    """
    blocks = M.blocks
    if signal.shape[-1] != blocks.shape[2]:
        raise ValueError(f"signal has width {signal.shape[-1]}, policy expects {blocks.shape[2]}")
    u = np.zeros(blocks.shape[1])
    for i in range(min(M.m, t)):
        u += blocks[i] @ signal[t - 1 - i]
    return u


def driving_signal(instance, kind):
    if kind is PolicyKind.DRC:
        return nature_x(instance)
    if kind is PolicyKind.DAC:
        return np.asarray(instance.w)
    raise ValueError("feedback policies have no precomputable signal")


def open_loop_inputs(kind, M, signal, T):
    """Inputs u_1..u_T of a DRC/DAC policy as one (T, d_u) array."""
    U = np.zeros((T, M.blocks.shape[1]))
    for i in range(M.m):
        if i >= T:
            break
        U[i:] += signal[:T - i] @ M.blocks[i].T
    return U


def _run_inputs(instance, U):
    T = instance.T
    X = np.zeros((T + 1, instance.d_x))
    X[0] = instance.x1
    for t in range(T):
        X[t + 1] = instance.A[t] @ X[t] + instance.B[t] @ U[t] + instance.w[t]
    return X


def rollout_policy(instance, kind, M):
    T = instance.T
    if kind is PolicyKind.FEEDBACK:
        X = np.zeros((T + 1, instance.d_x))
        U = np.zeros((T, instance.d_u))
        X[0] = instance.x1
        for t in range(1, T + 1):
            U[t - 1] = policy_action(kind, M, X, t)
            X[t] = instance.step(t, X[t - 1], U[t - 1])
            n = np.linalg.norm(X[t])
            if not n <= DIVERGENCE_GUARD:
                raise DivergenceError(t + 1, n)
    else:
        U = open_loop_inputs(kind, M, driving_signal(instance, kind), T)
        X = _run_inputs(instance, U)
    return Trace(X, U, np.asarray(instance.cost.values(X[:-1], U), dtype=float))


class AffineResponse:
    """States and inputs of a DRC/DAC policy as affine functions of vec(M).

    x_t(theta) = X0[t] + theta @ BX[:, t] and u_t(theta) = theta @ BU[:, t].
    """

    def __init__(self, instance, kind, m):
        if kind is PolicyKind.FEEDBACK:
            raise ValueError("feedback rollouts are not affine in the parameter")
        self.instance, self.kind, self.m = instance, kind, m
        T, dx, du = instance.T, instance.d_x, instance.d_u
        S = driving_signal(instance, kind)[:T]
        n = m * du * dx
        BU = np.zeros((n, T, du))
        for k in range(n):
            i, j, l = np.unravel_index(k, (m, du, dx))
            if i < T:
                BU[k, i:, j] = S[:T - i, l]
        BX = np.zeros((n, T + 1, dx))
        for t in range(T):
            BX[:, t + 1] = BX[:, t] @ instance.A[t].T + BU[:, t] @ instance.B[t].T
        self.X0 = nature_x(instance)
        self.BX, self.BU = BX, BU
        self.n = n

    def trajectory(self, theta):
        theta = np.asarray(theta, dtype=float)
        X = self.X0 + np.tensordot(theta, self.BX, axes=(-1, 0))
        U = np.tensordot(theta, self.BU, axes=(-1, 0))
        return X, U

    def costs(self, thetas, I=None, chunk=256):
        """Total cost over I = (r, s) for each row of ``thetas``."""
        thetas = np.atleast_2d(thetas)
        r, s = I if I is not None else (1, self.instance.T)
        BX = self.BX[:, r - 1:s]
        BU = self.BU[:, r - 1:s]
        X0 = self.X0[r - 1:s]
        steps = np.arange(r, s + 1)
        out = np.empty(len(thetas))
        for a in range(0, len(thetas), chunk):
            th = thetas[a:a + chunk]
            X = X0 + np.tensordot(th, BX, axes=(1, 0))
            U = np.tensordot(th, BU, axes=(1, 0))
            out[a:a + chunk] = self.instance.cost.value(steps, X, U).sum(axis=-1)
        return out

    def cost_grad(self, theta, I=None):
        """Total cost over I and its (sub)gradient in theta."""
        r, s = I if I is not None else (1, self.instance.T)
        X, U = self.trajectory(theta)
        steps = np.arange(r, s + 1)
        Xi, Ui = X[r - 1:s], U[r - 1:s]
        gx, gu = self.instance.cost.grad(steps, Xi, Ui)
        g = (np.tensordot(self.BX[:, r - 1:s], gx, axes=([1, 2], [0, 1]))
             + np.tensordot(self.BU[:, r - 1:s], gu, axes=([1, 2], [0, 1])))
        return float(self.instance.cost.value(steps, Xi, Ui).sum()), g


def feedback_batch_costs(instance, Ks, I=None):
    """Total cost over I of many feedback policies at once.

    ``Ks`` has shape (N, m, d_u, d_x). Diverging policies score +inf.
    """
    Ks = np.asarray(Ks, dtype=float)
    N, m = Ks.shape[:2]
    T = instance.T
    r, s = I if I is not None else (1, T)
    hist = np.zeros((m, N, instance.d_x))
    x = np.broadcast_to(instance.x1, (N, instance.d_x)).copy()
    total = np.zeros(N)
    alive = np.ones(N, dtype=bool)
    for t in range(1, s + 1):
        hist = np.roll(hist, 1, axis=0)
        hist[0] = x
        u = np.einsum("nijk,ink->nj", Ks, hist)
        if t >= r:
            total += instance.cost.value(t, x, u)
        x = x @ instance.A[t - 1].T + u @ instance.B[t - 1].T + instance.w[t - 1]
        blown = ~(np.linalg.norm(x, axis=1) <= DIVERGENCE_GUARD)
        if blown.any():
            alive &= ~blown
            x[blown] = 0.0
            hist[:, blown] = 0.0
    total[~alive] = np.inf
    return total
