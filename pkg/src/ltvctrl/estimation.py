"""Online estimation of a drifting target through a noisy, costly query oracle.

``AdaPred`` runs a batch of independent copies side by side (leading axis B)
because the working-set schedule is deterministic and shared across copies.
"""

import math

import numpy as np
from scipy.special import logsumexp


def _lifetime(i):
    k = (i & -i).bit_length() - 1      # i = r * 2^k with r odd
    return 2 ** (k + 2) + 1


def working_set(t):
    """Birth indices alive at step t: i is alive iff i <= t <= i + 2^{k+2} + 1."""
    if t < 1:
        raise ValueError("t must be >= 1")
    out = []
    k = 0
    while 2 ** k <= t:
        step = 2 ** k
        lo = max(1, t - 2 ** (k + 2) - 1)
        # smallest odd multiple of 2^k that is >= lo
        r = -(-lo // step)
        if r % 2 == 0:
            r += 1
        while r * step <= t:
            out.append(r * step)
            r += 2
        k += 1
    return sorted(out)


def project_ball(Z, radius):
    n = np.linalg.norm(Z, axis=-1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(n, 1e-300))
    return Z * scale


class NoisyOracle:
    """Returns z*_t plus noise drawn uniformly from a centered ball; unbiased by symmetry."""

    def __init__(self, targets, noise_radius, rng, batch=None):
        self.targets = np.asarray(targets, dtype=float)   # (T, d) or (B, T, d)
        self.noise_radius = float(noise_radius)
        self.rng = rng
        self.batch = batch
        self.log = []

    @property
    def bound(self):
        return float(np.linalg.norm(self.targets, axis=-1).max()) + self.noise_radius

    def target(self, t):
        return self.targets[..., t - 1, :]

    def query(self, t):
        z = self.target(t)
        shape = z.shape if self.batch is None else (self.batch,) + z.shape[-1:]
        d = shape[-1]
        g = self.rng.normal(size=shape)
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        rad = self.noise_radius * self.rng.random(shape[:-1] + (1,)) ** (1.0 / d)
        self.log.append(t)
        return z + g * rad


class BaseEstimator:
    """SGD on the importance-weighted square loss with step 1/t."""

    def __init__(self, z0, p, radius, t0=1):
        self.z = np.array(z0, dtype=float)
        self.p = float(p)
        self.radius = float(radius)
        self.k = 1                # steps since birth, so eta = 1/k
        self.t = t0

    @staticmethod
    def surrogate(z, z_tilde, p):
        return np.sum((z - z_tilde) ** 2, axis=-1) / (2 * p)

    @staticmethod
    def gradient(z, z_tilde, p):
        return (z - z_tilde) / p

    def play(self):
        return self.z

    def step(self, b, z_tilde=None):
        z_hat = self.z.copy()
        if b:
            if z_tilde is None:
                raise ValueError(f"query issued at t={self.t} but no estimate supplied")
            g = self.gradient(self.z, np.asarray(z_tilde, dtype=float), self.p)
            self.z = project_ball(self.z - g / self.k, self.radius)
        self.k += 1
        self.t += 1
        return z_hat


def base_bound(R_z, R_tilde, p, lam, T):
    return (R_z + R_tilde) ** 2 * (1 + math.log(T)) / p + lam * p * T


def ada_pred_bound(R_z, R_tilde, p, lam, s, length):
    return 2 * (R_z + R_tilde) ** 2 * (1 + math.log(s) * math.log(length)) / p + lam * p * length


class AdaPred:
    """Weighted ensemble of base estimators started at every step, pruned to the working set."""

    def __init__(self, dim, p, R_z, R_tilde, batch=1, z0=None, alpha=None, project=None):
        self.dim, self.p, self.batch = dim, float(p), batch
        self.R_z, self.R_tilde = float(R_z), float(R_tilde)
        self.alpha = self.p / (self.R_z + self.R_tilde) ** 2 if alpha is None else float(alpha)
        self.z0 = np.zeros(dim) if z0 is None else np.asarray(z0, dtype=float)
        self.project = project or (lambda Z: project_ball(Z, self.R_z))
        self.t = 1
        self.births = [1]
        self.Z = np.broadcast_to(self.z0, (batch, 1, dim)).copy()
        self.logq = np.zeros((batch, 1))

    @property
    def weights(self):
        return np.exp(self.logq)

    def predict(self):
        return np.einsum("bk,bkd->bd", self.weights, self.Z)

    def update(self, b, z_tilde=None):
        """Feed the query indicators (shape B) and oracle answers (B, d) for the current step."""
        t = self.t
        b = np.broadcast_to(np.asarray(b, dtype=bool), (self.batch,))
        births = np.array(self.births)
        if b.any():
            if z_tilde is None:
                raise ValueError(f"query issued at t={t} but no estimate supplied")
            zt = np.broadcast_to(np.asarray(z_tilde, dtype=float), (self.batch, self.dim))
            diff = self.Z - zt[:, None, :]
            loss = np.where(b[:, None], np.sum(diff ** 2, axis=-1) / (2 * self.p), 0.0)
            logq = self.logq - self.alpha * loss
            logq -= logsumexp(logq, axis=1, keepdims=True)
            eta = 1.0 / (t - births + 1)
            step = np.where(b[:, None, None], diff / self.p, 0.0) * eta[None, :, None]
            self.Z = self.project(self.Z - step)
        else:
            logq = self.logq
        logq = logq + math.log(t / (t + 1))
        # newborn expert t+1 enters with weight 1/(t+1)
        self.births.append(t + 1)
        self.Z = np.concatenate([self.Z, np.broadcast_to(self.z0, (self.batch, 1, self.dim))], axis=1)
        logq = np.concatenate([logq, np.full((self.batch, 1), -math.log(t + 1))], axis=1)
        alive = set(working_set(t + 1))
        keep = np.array([i in alive for i in self.births])
        if not keep.all():
            self.births = [i for i, k in zip(self.births, keep) if k]
            self.Z = self.Z[:, keep]
            logq = logq[:, keep]
        self.logq = logq - logsumexp(logq, axis=1, keepdims=True)
        self.t = t + 1

    def step(self, b, z_tilde=None):
        z_hat = self.predict()
        self.update(b, z_tilde)
        return z_hat


def run_ada_pred(oracle, T, dim, p, R_z, R_tilde, rng, batch=1, b=None):
    """Play T rounds; returns predictions (B, T, d) and query flags (B, T)."""
    est = AdaPred(dim, p, R_z, R_tilde, batch=batch)
    preds = np.zeros((batch, T, dim))
    flags = rng.random((batch, T)) < p if b is None else np.asarray(b, dtype=bool).reshape(batch, T)
    for t in range(1, T + 1):
        preds[:, t - 1] = est.predict()
        bt = flags[:, t - 1]
        est.update(bt, oracle.query(t) if bt.any() else None)
    return preds, flags


def estimation_regret(preds, targets, flags, I, lam, radius=None):
    """Square-loss regret on I = (r, s) against the best fixed point plus query cost.

    The comparator is the interval mean of the targets, projected on the ball
    of the given radius when one is supplied (exact for balls: the objective
    is isotropic around the mean).
    """
    r, s = I
    P = preds[..., r - 1:s, :]
    Zs = targets[..., r - 1:s, :]
    zbar = Zs.mean(axis=-2, keepdims=True)
    if radius is not None:
        zbar = project_ball(zbar, radius)
    alg = np.sum((P - Zs) ** 2, axis=(-2, -1))
    best = np.sum((zbar - Zs) ** 2, axis=(-2, -1))
    return alg - best + lam * flags[..., r - 1:s].sum(axis=-1)


def strong_adaptivity_instance(gamma, T, seed):
    """Blockwise Rademacher targets: ceil(T / T^{gamma/2}) blocks, one random sign each."""
    length = max(1, int(round(T ** (gamma / 2))))
    if length > T:
        length = T
    k = -(-T // length)
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=k)
    blocks = [(j * length + 1, min(T, (j + 1) * length)) for j in range(k)]
    targets = np.repeat(signs, length)[:T, None]
    return targets, blocks


def audit_blocks(preds, targets, flags, blocks):
    """Per block: number of queries and realized square loss."""
    rows = []
    for r, s in blocks:
        q = int(np.sum(flags[r - 1:s]))
        loss = float(np.sum((preds[r - 1:s] - targets[r - 1:s]) ** 2))
        rows.append((r, s, q, loss))
    return rows


def working_set_audit(T_max):
    """Check size, interval hitting, single insertion and at-most-one removal for t <= T_max.

    Returns a list of (t, property, detail) failures; empty means every property held.
    Hitting is checked per gap: the hardest start s in (k_{j-1}, k_j] is k_{j-1} + 1.
    """
    bad = []
    prev = None
    for t in range(1, T_max + 1):
        S = working_set(t)
        if len(S) > 3 * (t.bit_length()):
            bad.append((t, "size", len(S)))
        keys = np.array(S)
        lower = np.concatenate([[0], keys[:-1]]) + 1
        if S[-1] != t or np.any(2 * keys > lower + t):
            bad.append((t, "hitting", None))
        if prev is not None:
            added = set(S) - prev
            removed = prev - set(S)
            if added != {t}:
                bad.append((t, "insert", sorted(added)))
            if len(removed) > 1:
                bad.append((t, "remove", sorted(removed)))
        prev = set(S)
    return bad
