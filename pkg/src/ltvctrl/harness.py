"""Comparator oracles, interval regret reports and the seeded Monte-Carlo driver."""

import csv
import hashlib
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import LtvInstance, op_norm, simulate, zero_controller
from .policies import (AffineResponse, PolicyKind, PolicyParam,
                       feedback_batch_costs, rollout_policy)

GRID_POINT_CAP = 2_000_000


def dyadic_intervals(T):
    out = []
    size = 1 << max(0, (T - 1).bit_length())
    while size >= 1:
        for start in range(1, T + 1, size):
            out.append((start, min(T, start + size - 1)))
        size //= 2
    return out


def _clip_levels(S, c):
    """Per row of S (singular values, descending), the tau >= 0 with sum_j (s_j - tau)_+ = c."""
    k = np.arange(1, S.shape[1] + 1)
    tau = (np.cumsum(S, axis=1) - c) / k
    last = np.sum(S > tau, axis=1) - 1
    return np.maximum(tau[np.arange(len(S)), np.maximum(last, 0)], 0.0)


def project_l1op(blocks, R):
    """Euclidean projection onto {sum_i ||M_i||_op <= R}.

    Each block keeps its singular vectors and has its singular values clipped at
    a level tau_i; the levels share one multiplier, found by bisection.
    """
    blocks = np.asarray(blocks, dtype=float)
    U, S, Vt = np.linalg.svd(blocks, full_matrices=False)
    if S[:, 0].sum() <= R:
        return blocks
    if len(S) == 1:
        return np.einsum("mik,mk,mkj->mij", U, np.minimum(S, R), Vt)
    lo, hi = 0.0, float(S.sum(axis=1).max())
    for _ in range(200):
        c = 0.5 * (lo + hi)
        if _clip_levels(S, c).sum() > R:
            lo = c
        else:
            hi = c
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    tau = _clip_levels(S, hi)
    return np.einsum("mik,mk,mkj->mij", U, np.minimum(S, tau[:, None]), Vt)


def _ball_grid(m, d_u, d_x, R, pitch):
    n = m * d_u * d_x
    k = int(math.floor(R / pitch + 1e-9))
    count = (2 * k + 1) ** n
    if count > GRID_POINT_CAP:
        raise ValueError(f"grid of {count} points exceeds the cap {GRID_POINT_CAP}; "
                         "raise the pitch or lower the dimension")
    axis = pitch * np.arange(-k, k + 1)
    pts = np.array(list(itertools.product(axis, repeat=n))) if n > 1 else axis[:, None]
    norms = op_norm(pts.reshape(-1, m, d_u, d_x)).sum(axis=1)
    return pts[norms <= R + 1e-12]


@dataclass
class ComparatorResult:
    M: PolicyParam
    cost: float
    method: str


def best_in_class(instance, kind, m, R_M, I=None, method="grid", pitch=1e-2,
                  restarts=1, iters=10000, seed=0, response=None):
    """Best policy of the class in hindsight on I = (r, s), rolled out from t = 1.

    ``descent`` is a first-order method for differentiable costs; on kinked costs
    (such as an absolute value) it can stop above the optimum.
    """
    dx, du = instance.d_x, instance.d_u
    I = I or (1, instance.T)
    if method == "grid":
        pts = _ball_grid(m, du, dx, R_M, pitch)
        if kind is PolicyKind.FEEDBACK:
            costs = np.concatenate([feedback_batch_costs(instance, pts[a:a + 2048].reshape(-1, m, du, dx), I)
                                    for a in range(0, len(pts), 2048)])
        else:
            resp = response or AffineResponse(instance, kind, m)
            costs = resp.costs(pts, I)
        k = int(np.argmin(costs))
        return ComparatorResult(PolicyParam.from_vec(pts[k], m, du, dx), float(costs[k]), "grid")
    if method != "descent":
        raise ValueError(f"unknown comparator method {method!r}")
    if kind is PolicyKind.FEEDBACK:
        raise ValueError("descent needs a convex class; use the grid for feedback")
    resp = response or AffineResponse(instance, kind, m)
    rng = np.random.default_rng(seed)
    shape = (m, du, dx)
    best = None
    starts = [np.zeros(resp.n)]
    for _ in range(restarts - 1):
        v = rng.normal(size=resp.n)
        starts.append(project_l1op((v * R_M * rng.random() / np.linalg.norm(v)).reshape(shape), R_M).reshape(-1))
    for th in starts:
        # accelerated projected gradient with backtracking and function-value restarts
        f, _ = resp.cost_grad(th, I)
        y, k_mom, step = th, 1.0, 1.0
        for _ in range(iters):
            fy, gy = resp.cost_grad(y, I)
            while True:
                cand = project_l1op((y - step * gy).reshape(shape), R_M).reshape(-1)
                fc, _ = resp.cost_grad(cand, I)
                d = cand - y
                if fc <= fy + gy @ d + (d @ d) / (2 * step) + 1e-12 or step < 1e-14:
                    break
                step *= 0.5
            if fc > f:
                y, k_mom = th, 1.0
                continue
            k_next = 0.5 * (1 + math.sqrt(1 + 4 * k_mom ** 2))
            y = cand + ((k_mom - 1) / k_next) * (cand - th)
            moved = np.linalg.norm(cand - th)
            done = f - fc <= 1e-14 * max(1.0, abs(f)) and moved <= 1e-10
            th, f, k_mom = cand, fc, k_next
            step *= 1.25
            if done:
                break
        if best is None or f < best[1]:
            best = (th, f)
    return ComparatorResult(PolicyParam.from_vec(best[0], m, du, dx), float(best[1]), "descent")


@dataclass
class RegretReport:
    records: list
    grid: str
    method: str

    def to_rows(self):
        return [{"r": r["interval"][0], "s": r["interval"][1], "alg_cost": r["alg_cost"],
                 "comparator_cost": r["comparator_cost"], "regret": r["regret"]} for r in self.records]

    def max_regret(self):
        return max(r["regret"] for r in self.records)


def interval_grid(instance, grid="dyadic"):
    if isinstance(grid, (list, tuple)):
        return [tuple(I) for I in grid]
    if grid == "dyadic":
        out = dyadic_intervals(instance.T)
    elif grid == "all":
        if instance.T > 512:
            raise ValueError("the all-intervals grid is limited to T <= 512")
        out = [(r, s) for r in range(1, instance.T + 1) for s in range(r, instance.T + 1)]
    elif grid == "segments":
        out = []
    else:
        raise ValueError(f"unknown grid {grid!r}")
    segs = [tuple(s) for s in instance.meta.get("segments", [])]
    return out + [s for s in segs if s not in out]


def adaptive_regret(trace, instance, kind, m, R_M, grid="dyadic", method="grid",
                    explicit=None, **kw):
    """Regret of the trace on each interval against the class comparator (or an explicit policy)."""
    intervals = interval_grid(instance, grid)
    resp = None
    if explicit is None and kind is not PolicyKind.FEEDBACK:
        resp = AffineResponse(instance, kind, m)
    if explicit is not None:
        comp_costs = rollout_policy(instance, kind, explicit).costs
    records = []
    for I in intervals:
        r, s = I
        alg = float(trace.costs[r - 1:s].sum())
        if explicit is not None:
            comp = float(comp_costs[r - 1:s].sum())
        else:
            comp = best_in_class(instance, kind, m, R_M, I, method=method, response=resp, **kw).cost
        records.append({"interval": I, "alg_cost": alg, "comparator_cost": comp, "regret": alg - comp})
    tag = "explicit" if explicit is not None else method
    return RegretReport(records, grid if isinstance(grid, str) else "explicit", tag)


# ---------------------------------------------------------------- experiment driver

@dataclass
class ExperimentConfig:
    instance: dict
    algorithm: dict
    seeds: list = field(default_factory=lambda: [0])
    comparator: dict = field(default_factory=dict)   # {"kind", "m", "R_M", "method"} or {}
    grid: object = "full"

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    def digest(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def build_instance(spec, seed):
    from . import instances as gen
    name = spec["generator"]
    p = dict(spec.get("params", {}))
    s = p.pop("seed", seed)
    if name == "dsigma":
        return gen.gen_dsigma(p["sigma"], p["T"], s, p.get("f_kind", "abs"), p.get("alpha", gen.DEFAULT_ALPHA))[0]
    if name == "separation":
        return gen.gen_separation(p["which"], p["T"]).instance
    if name == "unstable_scalar":
        return gen.gen_unstable_scalar(p["rho"], p["T"], s)[0]
    if name == "kswitch":
        return gen.gen_kswitch_lqr(p["k"], p["T"], p.get("d_x", 1), p.get("d_u", 1), s)
    if name == "lti_scalar":
        rng = np.random.default_rng(s)
        w = rng.uniform(-p.get("w_scale", 1.0), p.get("w_scale", 1.0), size=p["T"])
        return gen.lti_scalar(p["a"], p["b"], w)
    if name == "sat":
        with open(p["cnf"]) as fh:
            return gen.compile_max3sat(gen.read_dimacs(fh.read()), p.get("reg_scale", 1e3))
    if name == "json":
        with open(p["path"]) as fh:
            return LtvInstance.from_json(fh.read())
    raise ValueError(f"unknown instance generator {name!r}")


def run_algorithm(instance, spec, seed):
    from .feedback_bandit import default_eta, default_window, epsilon_cover, exp3_control_run
    from .oco_memory import run_drc_ogd
    from .unknown_control import AdaCtrlConfig, ada_ctrl_run, default_h, default_p
    name = spec["name"]
    p = dict(spec.get("params", {}))
    T = instance.T
    if name == "zero":
        return simulate(instance, zero_controller(instance))
    if name == "drc-ogd":
        return run_drc_ogd(instance, p.get("m", 1), p.get("h", 1), p.get("R_M", 1.0), p["eta"])
    if name == "ada-ctrl":
        h = p.get("h") or default_h(T, p.get("rho", 0.5))
        cfg = AdaCtrlConfig(p=p.get("p", default_p(T)), h=h, m=p.get("m", 1), R_M=p.get("R_M", 1.0),
                            R_G=p.get("R_G", 1.0), R_nat=p.get("R_nat", 1.0), eta=p.get("eta"), seed=seed)
        return ada_ctrl_run(instance, cfg, diagnostics=False)
    if name == "exp3":
        cover = epsilon_cover(p["R_K"], p["eps"], instance.d_x, instance.d_u)
        H = p.get("H") or default_window(T)
        eta = p.get("eta") or default_eta(len(cover), T, H, p["B"])
        return exp3_control_run(instance, cover, H, eta, seed)
    raise ValueError(f"unknown algorithm {name!r}")


def _comparator_cost(instance, comp, I):
    if not comp:
        return float("nan")
    kind = PolicyKind(comp["kind"])
    if "policy" in comp:
        M = PolicyParam.from_dict(comp["policy"])
        return float(rollout_policy(instance, kind, M).costs[I[0] - 1:I[1]].sum())
    return best_in_class(instance, kind, comp.get("m", 1), comp.get("R_M", 1.0), I,
                         method=comp.get("method", "grid"), pitch=comp.get("pitch", 1e-2)).cost


def monte_carlo(config):
    """Run every seed; returns (rows, summary). A failing seed is recorded and skipped."""
    rows = []
    for seed in sorted(config.seeds):
        try:
            inst = build_instance(config.instance, seed)
            trace = run_algorithm(inst, config.algorithm, seed)
            I = (1, inst.T)
            alg = float(trace.costs.sum())
            comp = _comparator_cost(inst, config.comparator, I)
            rows.append({"seed": seed, "T": inst.T, "alg_cost": alg, "comparator_cost": comp,
                         "regret": alg - comp, "status": "ok"})
        except (ArithmeticError, ValueError) as exc:
            rows.append({"seed": seed, "T": None, "alg_cost": None, "comparator_cost": None,
                         "regret": None, "status": f"failed: {exc}"})
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {"config_hash": config.digest(), "n_seeds": len(rows), "n_ok": len(ok),
               "n_failed": len(rows) - len(ok)}
    for key in ("alg_cost", "comparator_cost", "regret"):
        vals = np.array([r[key] for r in ok], dtype=float)
        if len(vals):
            summary[f"{key}_mean"] = float(vals.mean())
            summary[f"{key}_stderr"] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return rows, summary


def rows_to_csv(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def mean_stderr(values):
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else 0.0
    return float(v.mean()), float(se)


def loglog_slope(Ts, values):
    return float(np.polyfit(np.log(np.asarray(Ts, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)[0])
