"""Per-step convex costs c_t(x, u).

Every cost evaluates on batches: ``x`` may carry leading dimensions and ``t``
may be an integer step (1-based) or an array of steps that broadcasts against
the leading dimensions of ``x``. ``values(X, U)`` scores a whole trajectory.
"""

import numpy as np


def project_simplex(v, s=1.0):
    """Euclidean projection onto {z >= 0, sum z = s} along the last axis."""
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    mu = -np.sort(-v, axis=-1)
    css = np.cumsum(mu, axis=-1) - s
    ks = np.arange(1, n + 1)
    cond = mu - css / ks > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


def simplex_distance(v):
    """Distance to the probability simplex and its gradient (zero on the set)."""
    v = np.asarray(v, dtype=float)
    diff = v - project_simplex(v)
    dist = np.linalg.norm(diff, axis=-1)
    safe = np.where(dist > 0, dist, 1.0)
    grad = np.where(dist[..., None] > 0, diff / safe[..., None], 0.0)
    return dist, grad


def _step_param(P, t):
    # P is either shared (no leading T axis) or per-step with T leading
    return P[np.asarray(t) - 1]


class CostFn:
    kind = "custom"
    signed = False
    L = 1.0

    def value(self, t, x, u):
        raise NotImplementedError

    def grad(self, t, x, u):
        raise NotImplementedError

    def values(self, X, U):
        T = X.shape[-2]
        return self.value(np.arange(1, T + 1), X, U)

    def to_dict(self):
        raise TypeError(f"cost kind {self.kind!r} is not serializable")


class QuadraticTracking(CostFn):
    """(x - x*_t)' Q (x - x*_t) + (u - u*_t)' R (u - u*_t)."""

    kind = "quadratic_tracking"

    def __init__(self, Q, R, T, x_star=None, u_star=None):
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.asarray(R, dtype=float)
        dx, du = self.Q.shape[-1], self.R.shape[-1]
        self.T = int(T)
        # a single target vector is shared across steps
        self.x_star = np.broadcast_to(np.zeros(dx) if x_star is None else x_star, (T, dx)).astype(float)
        self.u_star = np.broadcast_to(np.zeros(du) if u_star is None else u_star, (T, du)).astype(float)
        qn = np.linalg.norm(self.Q.reshape(-1, dx, dx), 2, axis=(1, 2)).max()
        rn = np.linalg.norm(self.R.reshape(-1, du, du), 2, axis=(1, 2)).max()
        shift = np.linalg.norm(self.x_star, axis=1).max() + np.linalg.norm(self.u_star, axis=1).max()
        self.L = 2.0 * max(qn, rn, 1e-12) * (1.0 + shift) ** 2

    def _mats(self, t):
        Q = self.Q if self.Q.ndim == 2 else _step_param(self.Q, t)
        R = self.R if self.R.ndim == 2 else _step_param(self.R, t)
        return Q, R

    def value(self, t, x, u):
        Q, R = self._mats(t)
        ex = x - _step_param(self.x_star, t)
        eu = u - _step_param(self.u_star, t)
        return (np.einsum("...i,...ij,...j->...", ex, Q, ex)
                + np.einsum("...i,...ij,...j->...", eu, R, eu))

    def grad(self, t, x, u):
        Q, R = self._mats(t)
        ex = x - _step_param(self.x_star, t)
        eu = u - _step_param(self.u_star, t)
        gx = np.einsum("...ij,...j->...i", Q + np.swapaxes(Q, -1, -2), ex)
        gu = np.einsum("...ij,...j->...i", R + np.swapaxes(R, -1, -2), eu)
        return gx, gu

    def to_dict(self):
        return {"kind": self.kind, "params": {
            "Q": self.Q.tolist(), "R": self.R.tolist(), "T": self.T,
            "x_star": self.x_star.tolist(), "u_star": self.u_star.tolist()}}


class SeparationCost(CostFn):
    """Scalar a*(u - k*x - r_t)^2 + b*|x - s_t|, the form shared by the separation sequences."""

    kind = "separation"

    def __init__(self, a, k, r, b=0.0, s=None, signed=False, label=""):
        self.a, self.k, self.b = float(a), float(k), float(b)
        self.r = np.asarray(r, dtype=float)
        self.s = np.zeros_like(self.r) if s is None else np.asarray(s, dtype=float)
        self.signed = bool(signed)
        self.label = label
        self.L = 2.0 * (self.a * (1 + abs(self.k)) ** 2 * (1 + np.abs(self.r).max()) ** 2
                        + self.b * (1 + np.abs(self.s).max()))

    def value(self, t, x, u):
        e = u[..., 0] - self.k * x[..., 0] - _step_param(self.r, t)
        return self.a * e ** 2 + self.b * np.abs(x[..., 0] - _step_param(self.s, t))

    def grad(self, t, x, u):
        e = u[..., 0] - self.k * x[..., 0] - _step_param(self.r, t)
        gx = -2 * self.a * self.k * e + self.b * np.sign(x[..., 0] - _step_param(self.s, t))
        gu = 2 * self.a * e
        return gx[..., None], gu[..., None]

    def to_dict(self):
        return {"kind": self.kind, "params": {
            "a": self.a, "k": self.k, "b": self.b, "r": self.r.tolist(),
            "s": self.s.tolist(), "signed": self.signed, "label": self.label}}


class DsigmaCost(CostFn):
    """x[2]^2 + u[2]^2 + f(x[1]) with f = |.| or (.)^2 (coordinates 1-based)."""

    kind = "dsigma"
    L = 3.0

    def __init__(self, f_kind="abs"):
        if f_kind not in ("abs", "square"):
            raise ValueError(f"unknown f_kind {f_kind!r}")
        self.f_kind = f_kind

    def f(self, z):
        return np.abs(z) if self.f_kind == "abs" else z ** 2

    def value(self, t, x, u):
        return x[..., 1] ** 2 + u[..., 1] ** 2 + self.f(x[..., 0])

    def grad(self, t, x, u):
        gx = np.zeros(np.broadcast_shapes(x.shape, u.shape[:-1] + x.shape[-1:]))
        gu = np.zeros(np.broadcast_shapes(u.shape, x.shape[:-1] + u.shape[-1:]))
        gx[..., 0] = np.sign(x[..., 0]) if self.f_kind == "abs" else 2 * x[..., 0]
        gx[..., 1] = 2 * x[..., 1]
        gu[..., 1] = 2 * u[..., 1]
        return gx, gu

    def to_dict(self):
        return {"kind": self.kind, "params": {"f_kind": self.f_kind}}


class SatCost(CostFn):
    """Simplex-regularity cost with a per-step linear reward on literal steps.

    c_t(x, u) = scale * (S_x(x) + (1 - x_sink)^2 * S_u(u)) - (r_t . u) * (1 - x_sink)
    where x_sink is the last state coordinate and S_* are simplex distances.
    """

    kind = "sat"
    signed = True

    def __init__(self, rewards, reg_scale=1e3):
        self.rewards = np.asarray(rewards, dtype=float)
        self.reg_scale = float(reg_scale)
        self.L = self.reg_scale + 2.0

    def value(self, t, x, u):
        sx, _ = simplex_distance(x)
        su, _ = simplex_distance(u)
        free = 1.0 - x[..., -1]
        r = _step_param(self.rewards, t)
        return self.reg_scale * (sx + free ** 2 * su) - np.sum(r * u, axis=-1) * free

    def grad(self, t, x, u):
        sx, gsx = simplex_distance(x)
        su, gsu = simplex_distance(u)
        free = 1.0 - x[..., -1]
        r = _step_param(self.rewards, t)
        gx = self.reg_scale * gsx
        gx[..., -1] += -2.0 * self.reg_scale * free * su + np.sum(r * u, axis=-1)
        gu = self.reg_scale * free[..., None] ** 2 * gsu - r * free[..., None]
        return gx, gu

    def to_dict(self):
        return {"kind": self.kind, "params": {
            "rewards": self.rewards.tolist(), "reg_scale": self.reg_scale}}


class CustomCost(CostFn):
    """Wraps user callbacks value(t, x, u) and grad(t, x, u) for a single step."""

    kind = "custom"

    def __init__(self, value_fn, grad_fn, L=1.0, signed=False):
        self._value, self._grad = value_fn, grad_fn
        self.L, self.signed = float(L), bool(signed)

    def value(self, t, x, u):
        if np.ndim(t) == 0:
            return self._value(int(t), x, u)
        return np.array([self._value(int(s), x[..., i, :], u[..., i, :])
                         for i, s in enumerate(np.ravel(t))]).T

    def grad(self, t, x, u):
        return self._grad(int(t), x, u)


_KINDS = {
    "quadratic_tracking": lambda p: QuadraticTracking(p["Q"], p["R"], p["T"], p["x_star"], p["u_star"]),
    "separation": lambda p: SeparationCost(p["a"], p["k"], p["r"], p["b"], p["s"], p["signed"], p.get("label", "")),
    "dsigma": lambda p: DsigmaCost(p["f_kind"]),
    "sat": lambda p: SatCost(p["rewards"], p["reg_scale"]),
}


def cost_from_dict(d):
    try:
        build = _KINDS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown cost kind {d.get('kind')!r}") from None
    return build(d["params"])


def check_cost_growth(cost, T, d_x, d_u, rng, n=200, scale=3.0):
    """Sample random points and check the growth and gradient bounds for unsigned costs.

    Returns a list of (t, x, u) triples that violate either bound.
    """
    if cost.signed:
        return []
    bad = []
    for _ in range(n):
        t = int(rng.integers(1, T + 1))
        x = rng.normal(size=d_x) * scale * rng.random()
        u = rng.normal(size=d_u) * scale * rng.random()
        v = float(cost.value(t, x, u))
        gx, gu = cost.grad(t, x, u)
        sq = x @ x + u @ u
        gnorm = np.sqrt(np.sum(gx ** 2) + np.sum(gu ** 2))
        lin = np.linalg.norm(x) + np.linalg.norm(u)
        tol = 1e-9
        if v < -tol or v > cost.L * max(1.0, sq) + tol or gnorm > cost.L * max(1.0, lin) + tol:
            bad.append((t, x, u))
    return bad
