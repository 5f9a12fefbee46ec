"""LTV systems x_{t+1} = A_t x_t + B_t u_t + w_t, trajectories and Markov operators.

Time is 1-based in the public API: ``A[t-1]`` holds A_t and ``states[t-1]`` holds x_t.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .costs import CostFn, cost_from_dict


class DimensionError(ValueError):
    def __init__(self, what, t, expected, got):
        super().__init__(f"{what} at t={t}: expected shape {expected}, got {got}")
        self.t = t


def op_norm(M):
    """Spectral norm; works on stacks of matrices (last two axes)."""
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] == (1, 1):
        return np.abs(M[..., 0, 0])
    return np.linalg.norm(M, 2, axis=(-2, -1))


def l1_op_norm(blocks):
    return float(op_norm(blocks).sum()) if len(blocks) else 0.0


def clip_blocks(blocks, radius):
    """Radial clip of a block sequence onto the l1-op ball of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    nrm = l1_op_norm(blocks)
    if nrm <= radius:
        return blocks
    return blocks * (radius / nrm)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _stack(seq, shape, what):
    if isinstance(seq, np.ndarray) and seq.ndim == len(shape) + 1 and seq.shape[1:] == shape:
        return seq
    out = []
    for t, item in enumerate(seq, start=1):
        item = np.asarray(item, dtype=float)
        if item.shape != shape:
            raise DimensionError(what, t, shape, item.shape)
        out.append(item)
    return np.array(out).reshape((len(out),) + shape)


class LtvInstance:
    """The adversary's full script (A_t, B_t, w_t, c_t), fixed before any control happens."""

    def __init__(self, A, B, w, cost: CostFn, x1=None, meta=None):
        A0 = np.asarray(A[0], dtype=float)
        B0 = np.asarray(B[0], dtype=float)
        d_x, d_u = B0.shape
        if A0.shape != (d_x, d_x):
            raise DimensionError("A", 1, (d_x, d_x), A0.shape)
        A = _stack(A, (d_x, d_x), "A")
        B = _stack(B, (d_x, d_u), "B")
        w = _stack(w, (d_x,), "w")
        T = A.shape[0]
        for name, arr in (("B", B), ("w", w)):
            if arr.shape[0] != T:
                raise DimensionError(name, min(arr.shape[0], T) + 1, f"{T} steps", f"{arr.shape[0]} steps")
        self.T, self.d_x, self.d_u = T, d_x, d_u
        self.A, self.B, self.w = _frozen(A), _frozen(B), _frozen(w)
        self.x1 = _frozen(np.zeros(d_x) if x1 is None else x1)
        if self.x1.shape != (d_x,):
            raise DimensionError("x1", 1, (d_x,), self.x1.shape)
        self.cost = cost
        self.meta = dict(meta or {})

    def step(self, t, x, u):
        return self.A[t - 1] @ x + self.B[t - 1] @ u + self.w[t - 1]

    def to_dict(self):
        return {"T": self.T, "d_x": self.d_x, "d_u": self.d_u,
                "A": self.A.tolist(), "B": self.B.tolist(), "w": self.w.tolist(),
                "x1": self.x1.tolist(), "cost": self.cost.to_dict(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d):
        inst = cls(np.array(d["A"], dtype=float), np.array(d["B"], dtype=float),
                   np.array(d["w"], dtype=float), cost_from_dict(d["cost"]),
                   x1=d.get("x1"), meta=d.get("meta"))
        if (inst.T, inst.d_x, inst.d_u) != (d["T"], d["d_x"], d["d_u"]):
            raise ValueError("header dimensions disagree with the arrays")
        return inst

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class Trace:
    states: np.ndarray          # (T+1, d_x), states[t-1] = x_t
    inputs: np.ndarray          # (T, d_u)
    costs: np.ndarray           # (T,)
    explore_flags: np.ndarray = None
    nat_estimates: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def total_cost(self):
        return float(self.costs.sum())

    def replay_error(self, instance):
        """Max deviation between stored states and the recursion driven by stored inputs."""
        X, U = self.states, self.inputs
        # same operation order as simulate, so a faithful trace replays bit-exactly
        pred = np.array([instance.A[t] @ X[t] + instance.B[t] @ U[t] + instance.w[t]
                         for t in range(len(U))]).reshape(X[1:].shape)
        return float(np.max(np.abs(pred - X[1:]), initial=0.0))


def simulate(instance, controller):
    """Roll the system forward; ``controller(t, xs, us)`` sees x_1..x_t and u_1..u_{t-1}."""
    T, d_x, d_u = instance.T, instance.d_x, instance.d_u
    X = np.zeros((T + 1, d_x))
    U = np.zeros((T, d_u))
    X[0] = instance.x1
    for t in range(1, T + 1):
        u = np.asarray(controller(t, X[:t], U[:t - 1]), dtype=float).reshape(-1)
        if u.shape != (d_u,):
            raise DimensionError("controller output", t, (d_u,), u.shape)
        U[t - 1] = u
        X[t] = instance.A[t - 1] @ X[t - 1] + instance.B[t - 1] @ u + instance.w[t - 1]
    return Trace(X, U, np.asarray(instance.cost.values(X[:-1], U), dtype=float))


def zero_controller(instance):
    z = np.zeros(instance.d_u)
    return lambda t, xs, us: z


def nature_x(instance):
    """States under identically zero input: (T+1, d_x) array, row t-1 = x^nat_t."""
    X = np.zeros((instance.T + 1, instance.d_x))
    X[0] = instance.x1
    for t in range(instance.T):
        X[t + 1] = instance.A[t] @ X[t] + instance.w[t]
    return X


def nature_x_closed_form(instance):
    """x^nat_{t+1} = Phi_t^{[t]} x_1 + sum_i Phi_t^{[i]} w_{t-i}, built from explicit products."""
    T, d = instance.T, instance.d_x
    X = np.zeros((T + 1, d))
    X[0] = instance.x1
    for t in range(1, T + 1):
        P = np.eye(d)
        acc = np.zeros(d)
        for i in range(t):
            acc += P @ instance.w[t - 1 - i]
            P = P @ instance.A[t - 1 - i]
        X[t] = acc + P @ instance.x1
    return X


class MarkovOperator:
    """Impulse-response blocks G^{[0]}, ..., G^{[h-1]}, each d_x by d_u."""

    def __init__(self, blocks):
        self.blocks = np.asarray(blocks, dtype=float)
        if self.blocks.ndim != 3:
            raise ValueError("blocks must be (h, d_x, d_u)")

    @property
    def h(self):
        return self.blocks.shape[0]

    def l1_op_norm(self):
        return l1_op_norm(self.blocks)

    def in_ball(self, R_G, tol=0.0):
        return self.l1_op_norm() <= R_G + tol

    def clip(self, R_G):
        return MarkovOperator(clip_blocks(self.blocks, R_G))

    def vec(self):
        return self.blocks.reshape(-1)

    def __sub__(self, other):
        return MarkovOperator(self.blocks - other.blocks)

    def __repr__(self):
        return f"MarkovOperator(h={self.h}, shape={self.blocks.shape[1:]})"


def transition(instance, t, h):
    """Phi_t^{[h]} = A_t A_{t-1} ... A_{t-h+1}; identity for h = 0."""
    P = np.eye(instance.d_x)
    for k in range(t, t - h, -1):
        P = P @ instance.A[k - 1]
    return P


def markov_operator(instance, t, h):
    if not 1 <= t <= instance.T:
        raise ValueError(f"step t={t} outside [1, {instance.T}]")
    if not 1 <= h <= t:
        raise ValueError(f"truncation h={h} needs history beyond t={t}")
    blocks = np.empty((h, instance.d_x, instance.d_u))
    P = np.eye(instance.d_x)
    for i in range(h):
        blocks[i] = P @ instance.B[t - 1 - i]
        P = P @ instance.A[t - 1 - i]
    return MarkovOperator(blocks)


def markov_operators(instance, h):
    """All h-truncated operators at once: (T, h, d_x, d_u); blocks before t=1 are zero."""
    T, dx, du = instance.T, instance.d_x, instance.d_u
    G = np.zeros((T, h, dx, du))
    P = np.broadcast_to(np.eye(dx), (T, dx, dx)).copy()
    G[:, 0] = instance.B
    for i in range(1, h):
        if i >= T:
            break
        # P[t] <- P[t] @ A_{t-i+1}, valid for rows with t - i >= 1
        P[i:] = P[i:] @ instance.A[1:T - i + 1]
        G[i:, i] = P[i:] @ instance.B[:T - i]
    return G


def psi(h, R_G, rho):
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    if h < 0:
        raise ValueError("h must be nonnegative")
    return R_G * rho ** h


@dataclass
class AssumptionReport:
    ok: bool
    R_nat: float = None
    R_G: float = None
    violation: tuple = None     # (kind, t, h, observed, bound)
    max_w: float = 0.0


def verify_assumptions(instance, C1, rho1, R_w, h_max=None, tol=1e-9):
    """Check ||Phi_t^{[h]}|| <= C1 rho1^h for 1 <= h <= min(t, h_max) and ||w_t|| <= R_w."""
    T = instance.T
    h_max = T if h_max is None else min(h_max, T)
    wn = np.linalg.norm(instance.w, axis=1)
    max_w = float(wn.max())
    if max_w > R_w + tol:
        t = int(np.argmax(wn > R_w + tol)) + 1
        return AssumptionReport(False, violation=("disturbance", t, 0, float(wn[t - 1]), R_w), max_w=max_w)
    P = np.broadcast_to(np.eye(instance.d_x), (T, instance.d_x, instance.d_x)).copy()
    for h in range(1, h_max + 1):
        # rows t >= h hold Phi_t^{[h]}
        P[h - 1:] = P[h - 1:] @ instance.A[:T - h + 1]
        norms = op_norm(P[h - 1:])
        bound = C1 * rho1 ** h
        bad = np.nonzero(norms > bound + tol)[0]
        if bad.size:
            t = int(bad[0]) + h
            return AssumptionReport(False, violation=("transition", t, h, float(norms[bad[0]]), bound), max_w=max_w)
        if not norms.any():
            break
    Bmax = float(op_norm(instance.B).max())
    R_nat = C1 * R_w / (1 - rho1)
    R_G = max(1.0, Bmax * C1 / (1 - rho1))
    return AssumptionReport(True, R_nat=R_nat, R_G=R_G, max_w=max_w)


def _as_block_array(operators):
    if isinstance(operators, np.ndarray):
        return operators
    return np.array([op.blocks if isinstance(op, MarkovOperator) else op for op in operators])


def variability(operators, I):
    """Mean squared Frobenius distance to the interval mean; I = (r, s), 1-based inclusive."""
    G = _as_block_array(operators)
    r, s = I
    if s < r:
        raise ValueError(f"empty interval {I}")
    seg = G[r - 1:s].reshape(s - r + 1, -1)
    return float(np.mean(np.sum((seg - seg.mean(axis=0)) ** 2, axis=1)))


def total_variability(operators, I):
    r, s = I
    return (s - r + 1) * variability(operators, I)
