"""Generators for the separation, lower-bound and hardness constructions."""

import itertools
from dataclasses import dataclass

import numpy as np

from .core import LtvInstance
from .costs import DsigmaCost, QuadraticTracking, SatCost, SeparationCost, simplex_distance
from .policies import PolicyKind, PolicyParam, rollout_policy


# ---------------------------------------------------------------- D_sigma

DEFAULT_ALPHA = 1.0 / 24


def ubar(sigma):
    return 1.0 / (2.0 * (1.0 + sigma ** 2 / 6.0))


def beta_second_moment(sigma):
    return 1.0 + sigma ** 2 / 3.0


def cq_star(sigma, alpha=DEFAULT_ALPHA):
    """Minimum over u of E[(beta u - omega)^2 + u^2]."""
    return 1.0 + (alpha * sigma) ** 2 - 1.0 / (2.0 + sigma ** 2 / 3.0)


def comparator_excess(sigma, f_kind="abs", alpha=DEFAULT_ALPHA):
    """Exact E[J_T(comparator)] - (T-1) c_q* when inputs before t=2 are zero."""
    a = alpha * sigma
    Ef = 1.0 if f_kind == "abs" else 1.0 + a ** 2
    return 1.0 / (2.0 + sigma ** 2 / 3.0) + ubar(sigma) ** 2 + Ef


def lower_bound_floor(T, sigma, f_kind="abs", alpha=DEFAULT_ALPHA):
    z = alpha * sigma
    f = abs(z) if f_kind == "abs" else z ** 2
    return (T - 2) * f / 2.0 - 2.0


def dsigma_comparator(sigma):
    M = np.zeros((1, 3, 3))
    M[0, 0, 1] = -1.0       # cancels the first coordinate of the next disturbance
    M[0, 1, 2] = -ubar(sigma)
    return PolicyParam(M)


def gen_dsigma(sigma, T, seed, f_kind="abs", alpha=DEFAULT_ALPHA):
    if not 0 < sigma <= 0.125:
        raise ValueError(f"sigma must lie in (0, 1/8], got {sigma}")
    rng = np.random.default_rng(seed)
    beta = rng.uniform(1 - sigma, 1 + sigma, size=T)
    omega = rng.choice([1 - alpha * sigma, 1 + alpha * sigma], size=T + 1)   # omega_0..omega_T
    A = np.zeros((T, 3, 3))
    B = np.zeros((T, 3, 3))
    B[:, 0, 0] = 1.0
    B[:, 1, 1] = beta
    B[:, 2, 2] = 1.0
    w = -np.stack([omega[:-1], omega[1:], np.ones(T)], axis=1)
    meta = {"generator": "dsigma", "sigma": sigma, "alpha": alpha, "f_kind": f_kind,
            "seed": seed, "beta": beta.tolist(), "omega": omega.tolist()}
    inst = LtvInstance(A, B, w, DsigmaCost(f_kind), meta=meta)
    return inst, dsigma_comparator(sigma)


# ---------------------------------------------------------------- separations

@dataclass
class Separation:
    instance: LtvInstance
    witness_kind: PolicyKind
    witness: PolicyParam
    excluded: tuple


def _z1(T):
    t = np.arange(1, T + 1)
    B = np.where(t % 2 == 1, 1.0, -1.0).reshape(T, 1, 1)
    cost = SeparationCost(1 / 8, 1 / 4, np.zeros(T), label="Z1")
    inst = LtvInstance(np.zeros((T, 1, 1)), B, np.ones((T, 1)), cost, meta={"generator": "Z1"})
    return Separation(inst, PolicyKind.FEEDBACK, PolicyParam([[[0.25]]]), (PolicyKind.DRC, PolicyKind.DAC))


def _z2(T):
    t = np.arange(1, T + 1)
    A = np.where(t % 2 == 0, 0.5, 0.25)
    w = np.where(t % 2 == 0, 0.5, 0.75)
    w[0] = 1.0
    target = np.concatenate([[0.0], w[:-1]])       # u_t should equal w_{t-1}
    inst = LtvInstance(A.reshape(T, 1, 1), np.zeros((T, 1, 1)), w.reshape(T, 1),
                       SeparationCost(1.0, 0.0, target, label="Z2"), meta={"generator": "Z2"})
    return Separation(inst, PolicyKind.DAC, PolicyParam([[[0.0]], [[1.0]]]),
                      (PolicyKind.DRC, PolicyKind.FEEDBACK))


def _z3(T):
    t = np.arange(1, T + 1)
    A = np.choose(t % 3, [0.0, 0.25, 0.25]).reshape(T, 1, 1)
    B = np.choose(t % 3, [0.0, -0.25, -0.2]).reshape(T, 1, 1)
    w = np.ones((T, 1))
    witness = PolicyParam([[[1.0]]])
    # costs are centered on the witness trajectory, so build it with a zero cost first
    probe = LtvInstance(A, B, w, SeparationCost(0.0, 0.0, np.zeros(T)))
    tr = rollout_policy(probe, PolicyKind.DRC, witness)
    cost = SeparationCost(0.25, 0.0, tr.inputs[:, 0], b=0.25, s=tr.states[:-1, 0],
                          signed=True, label="Z3")
    inst = LtvInstance(A, B, w, cost, meta={"generator": "Z3"})
    return Separation(inst, PolicyKind.DRC, witness, (PolicyKind.DAC, PolicyKind.FEEDBACK))


def gen_separation(which, T):
    try:
        return {"Z1": _z1, "Z2": _z2, "Z3": _z3}[which](T)
    except KeyError:
        raise ValueError(f"unknown separation sequence {which!r}") from None


# ---------------------------------------------------------------- unstable scalar

def gen_unstable_scalar(rho, T, seed):
    """A = rho, B_t uniform on {-1, +1}, w_1 = 1 then 0, cost x^2.

    Returns the instance and a dict of clairvoyant policies (kind, param), each with total cost 1.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    Bs = rng.choice([-1.0, 1.0], size=T)
    w = np.zeros((T, 1))
    w[0] = 1.0
    cost = QuadraticTracking(np.eye(1), np.zeros((1, 1)), T)
    inst = LtvInstance(np.full((T, 1, 1), rho), Bs.reshape(T, 1, 1), w, cost,
                       meta={"generator": "unstable_scalar", "rho": rho, "seed": seed})
    b2 = Bs[1] if T >= 2 else 1.0
    k = -rho * b2
    policies = {
        # the second block cancels the geometric tail of Nature's x after t = 2
        "drc": (PolicyKind.DRC, PolicyParam([[[k]], [[-k * rho]]])),
        "dac": (PolicyKind.DAC, PolicyParam([[[0.0]], [[k]]])),
        "feedback": (PolicyKind.FEEDBACK, PolicyParam([[[k]]])),
    }
    return inst, policies


def unstable_floor(rho, T):
    return float(sum(rho ** (2 * (t - 2)) for t in range(2, T + 1)))


# ---------------------------------------------------------------- MAX-3SAT

class CnfFormula:
    """Clauses as tuples of signed 1-based variable indices."""

    def __init__(self, n, clauses):
        self.n = int(n)
        self.clauses = [tuple(int(l) for l in c) for c in clauses]
        for j, c in enumerate(self.clauses, start=1):
            if not 1 <= len(c) <= 3:
                raise ValueError(f"clause {j} has {len(c)} literals")
            for l in c:
                if l == 0 or abs(l) > self.n:
                    raise ValueError(f"clause {j}: literal {l} outside [1, {self.n}]")
            if len({abs(l) for l in c}) != len(c):
                raise ValueError(f"clause {j} mentions a variable twice")

    @property
    def m(self):
        return len(self.clauses)

    def satisfied(self, v):
        v = np.asarray(v, dtype=bool)
        return sum(any(v[l - 1] if l > 0 else not v[-l - 1] for l in c) for c in self.clauses)

    def satisfied_batch(self, V):
        V = np.asarray(V, dtype=bool)
        count = np.zeros(len(V), dtype=int)
        for c in self.clauses:
            hit = np.zeros(len(V), dtype=bool)
            for l in c:
                hit |= V[:, l - 1] if l > 0 else ~V[:, -l - 1]
            count += hit
        return count

    def brute_force(self):
        if self.n > 16:
            raise ValueError("brute force is capped at n = 16")
        V = np.array(list(itertools.product([False, True], repeat=self.n)))
        s = self.satisfied_batch(V)
        best = int(np.argmax(s))
        return int(s[best]), V[best]

    @classmethod
    def random(cls, n, m, rng, width=3):
        clauses = []
        for _ in range(m):
            k = min(width, n)
            vars_ = rng.choice(np.arange(1, n + 1), size=k, replace=False)
            signs = rng.choice([-1, 1], size=k)
            clauses.append(tuple(int(s * v) for s, v in zip(signs, vars_)))
        return cls(n, clauses)

    def to_dimacs(self):
        lines = [f"p cnf {self.n} {self.m}"]
        lines += [" ".join(str(l) for l in c) + " 0" for c in self.clauses]
        return "\n".join(lines) + "\n"


def read_dimacs(text):
    n = None
    clauses, cur = [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line[0] in "c%":
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise ValueError(f"bad problem line: {line!r}")
            n = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                if cur:
                    clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(lit)
    if cur:
        clauses.append(tuple(cur))
    if n is None:
        raise ValueError("missing 'p cnf' header")
    return CnfFormula(n, clauses)


def compile_max3sat(formula, reg_scale=1e3):
    """One episode of length n+2 per clause; d_x = n+1, d_u = 2, x_1 = e_1."""
    n, m = formula.n, formula.m
    if n < 1 or m < 1:
        raise ValueError("need at least one variable and one clause")
    L = n + 2
    T = m * L
    A = np.zeros((T, n + 1, n + 1))
    B = np.zeros((T, n + 1, 2))
    R = np.zeros((T, 2))
    for j, clause in enumerate(formula.clauses):
        lits = {abs(l): l for l in clause}
        for s in range(1, L + 1):
            t = j * L + s - 1
            if s < n:
                A[t, s, :n] = 1.0
                A[t, n, n] = 1.0
            elif s == n:
                A[t, n, :] = 1.0
            elif s == n + 1:
                A[t, 0, :] = 1.0
            if s <= n and s in lits:
                col = 0 if lits[s] > 0 else 1
                B[t, s, col] += -1.0 if s < n else 0.0
                B[t, n, col] += 1.0 if s < n else 0.0
                R[t, col] = 1.0
            if s == n + 2:
                B[t, 0, :] = 1.0
    x1 = np.zeros(n + 1)
    x1[0] = 1.0
    meta = {"generator": "max3sat", "n": n, "m": m, "clauses": [list(c) for c in formula.clauses]}
    return LtvInstance(A, B, np.zeros((T, n + 1)), SatCost(R, reg_scale), x1=x1, meta=meta)


def assignment_to_K(v):
    v = np.asarray(v, dtype=bool)
    K = np.zeros((2, len(v) + 1))
    K[0, :-1] = v
    K[1, :-1] = ~v
    return K


def K_to_assignment(K, rng=None, tol=1e-6):
    """Round the first n columns of K to an assignment.

    With ``rng`` each column is sampled (true with probability equal to its first
    coordinate after projection onto the simplex); without it the larger
    coordinate wins and ties go to true.
    """
    cols = np.asarray(K, dtype=float)[:, :-1].T
    dist, _ = simplex_distance(cols)
    if np.any(dist > tol):
        i = int(np.argmax(dist > tol)) + 1
        raise ValueError(f"column {i} lies {dist[i - 1]:.3g} from the simplex; scale the "
                         "regularity cost up so feasible gains dominate")
    if rng is None:
        return cols[:, 0] >= cols[:, 1]
    from .costs import project_simplex
    p_true = project_simplex(cols)[:, 0]
    return rng.random(len(p_true)) < p_true


# ---------------------------------------------------------------- k-switching LQR

def switching_segments(k, T):
    """Contiguous partition of [1, T] into k segments ending at floor(jT/k)."""
    return [((j - 1) * T // k + 1, j * T // k) for j in range(1, k + 1)]


def random_stable(rng, d, norm=0.9):
    M = rng.normal(size=(d, d))
    return M * (norm * rng.uniform(0.3, 1.0) / np.linalg.norm(M, 2))


def gen_kswitch_lqr(k, T, d_x, d_u, seed, w_scale=1.0, a_norm=0.9):
    if not 1 <= k <= T:
        raise ValueError("need 1 <= k <= T")
    rng = np.random.default_rng(seed)
    segs = switching_segments(k, T)
    A = np.zeros((T, d_x, d_x))
    B = np.zeros((T, d_x, d_u))
    for r, s in segs:
        A[r - 1:s] = random_stable(rng, d_x, a_norm)
        Bj = rng.normal(size=(d_x, d_u))
        B[r - 1:s] = Bj / max(1.0, np.linalg.norm(Bj, 2))
    w = rng.uniform(-w_scale, w_scale, size=(T, d_x))
    cost = QuadraticTracking(np.eye(d_x), np.eye(d_u), T)
    return LtvInstance(A, B, w, cost, meta={"generator": "kswitch", "k": k, "seed": seed,
                                            "segments": [list(s) for s in segs]})


def lti_scalar(a, b, w, cost=None):
    """Time-invariant scalar system with a given disturbance sequence and quadratic cost."""
    w = np.asarray(w, dtype=float).reshape(-1, 1)
    T = len(w)
    cost = cost or QuadraticTracking(np.eye(1), np.eye(1), T)
    return LtvInstance(np.full((T, 1, 1), a), np.full((T, 1, 1), b), w, cost,
                       meta={"generator": "lti_scalar", "a": a, "b": b})
