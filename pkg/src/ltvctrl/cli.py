"""Command-line front end: ``ltvctrl <command> ...``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .core import DimensionError, LtvInstance, verify_assumptions
from .harness import (ExperimentConfig, adaptive_regret, build_instance, monte_carlo,
                      rows_to_csv, run_algorithm)
from .policies import DivergenceError, PolicyKind, PolicyParam

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class ValidationFailure(Exception):
    pass


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _load_instance(path):
    with open(path) as fh:
        return LtvInstance.from_json(fh.read())


def _out_dir(args):
    d = args.out or "."
    os.makedirs(d, exist_ok=True)
    return d


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _dump(path, obj):
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _params(args):
    p = json.loads(args.params) if getattr(args, "params", None) else {}
    if getattr(args, "config", None):
        p.update(_load_json(args.config).get("params", {}))
    return p


def trace_rows(trace, seed):
    rows = []
    for t in range(1, len(trace.costs) + 1):
        row = {"seed": seed, "t": t, "cost": float(trace.costs[t - 1])}
        for i, v in enumerate(trace.states[t - 1]):
            row[f"x{i + 1}"] = float(v)
        for i, v in enumerate(trace.inputs[t - 1]):
            row[f"u{i + 1}"] = float(v)
        if trace.explore_flags is not None:
            row["b"] = int(trace.explore_flags[t - 1])
        if "G_err" in trace.info:
            row["G_err"] = float(trace.info["G_err"][t - 1])
        if "nat_err" in trace.info:
            row["nat_err"] = float(trace.info["nat_err"][t])
        rows.append(row)
    return rows


# ---------------------------------------------------------------- commands

def cmd_instance_gen(args):
    spec = {"generator": args.generator, "params": _params(args)}
    inst = build_instance(spec, args.seed)
    path = os.path.join(_out_dir(args), "instance.json")
    _write(path, inst.to_json())
    print(f"wrote {path}: T={inst.T} d_x={inst.d_x} d_u={inst.d_u} cost={inst.cost.kind}")


def cmd_instance_inspect(args):
    inst = _load_instance(args.file)
    info = {"T": inst.T, "d_x": inst.d_x, "d_u": inst.d_u, "cost": inst.cost.kind,
            "signed": inst.cost.signed, "max_A_norm": float(np.linalg.norm(inst.A, 2, axis=(1, 2)).max()),
            "max_B_norm": float(np.linalg.norm(inst.B, 2, axis=(1, 2)).max()),
            "max_w_norm": float(np.linalg.norm(inst.w, axis=1).max()),
            "meta_keys": sorted(inst.meta)}
    print(json.dumps(info, indent=2))


def cmd_run(args):
    params = _params(args)
    algo = {"name": args.algorithm, "params": params}
    out = _out_dir(args)
    if args.algorithm == "ada-pred":
        return _run_ada_pred(args, params, out)
    if args.config:
        cfg = _load_json(args.config)
        cfg.setdefault("algorithm", algo)
        cfg["algorithm"]["name"] = args.algorithm
        if args.seed is not None:
            cfg["seeds"] = [args.seed]
        config = ExperimentConfig.from_dict({k: v for k, v in cfg.items()
                                             if k in ("instance", "algorithm", "seeds", "comparator", "grid")})
        rows, summary = monte_carlo(config)
        _write(os.path.join(out, "results.csv"), rows_to_csv(rows))
        _dump(os.path.join(out, "summary.json"), summary)
        print(json.dumps(summary, sort_keys=True))
        return EXIT_NUMERIC if summary["n_failed"] else EXIT_OK
    if not args.instance:
        raise ValidationFailure("either --instance or --config is required")
    inst = _load_instance(args.instance)
    seed = args.seed or 0
    trace = run_algorithm(inst, algo, seed)
    _write(os.path.join(out, "trace.csv"), rows_to_csv(trace_rows(trace, seed)))
    summary = {"algorithm": args.algorithm, "seed": seed, "T": inst.T, "total_cost": trace.total_cost}
    _dump(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _run_ada_pred(args, params, out):
    from .estimation import NoisyOracle, estimation_regret, run_ada_pred
    from .harness import dyadic_intervals
    T = int(params.get("T", 1000))
    p = float(params.get("p", 0.3))
    noise = float(params.get("noise", 0.5))
    lam = float(params.get("lam", 1.0))
    lo, hi = params.get("targets", [[0.5], [-0.5]])
    d = len(lo)
    targets = np.zeros((T, d))
    targets[:T // 2] = lo
    targets[T // 2:] = hi
    seed = args.seed or 0
    rng = np.random.default_rng(seed)
    oracle = NoisyOracle(targets, noise, rng, batch=1)
    R_z = float(params.get("R_z", 1.0))
    preds, flags = run_ada_pred(oracle, T, d, p, R_z, oracle.bound, rng)
    rows = []
    for r, s in dyadic_intervals(T):
        reg = float(estimation_regret(preds, targets, flags, (r, s), lam, radius=R_z)[0])
        rows.append({"seed": seed, "r": r, "s": s, "regret": reg})
    _write(os.path.join(out, "intervals.csv"), rows_to_csv(rows))
    summary = {"algorithm": "ada-pred", "seed": seed, "T": T, "queries": int(flags.sum()),
               "max_interval_regret": max(r["regret"] for r in rows)}
    _dump(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _read_trace(path, inst):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != inst.T:
        raise ValidationFailure(f"trace has {len(rows)} rows, instance has T={inst.T}")
    from .core import Trace
    X = np.zeros((inst.T + 1, inst.d_x))
    U = np.array([[float(r[f"u{i + 1}"]) for i in range(inst.d_u)] for r in rows])
    for t in range(inst.T):
        X[t + 1] = inst.step(t + 1, X[t], U[t])
    C = np.array([float(r["cost"]) for r in rows])
    return Trace(X, U, C)


def cmd_regret(args):
    inst = _load_instance(args.instance)
    trace = _read_trace(args.trace, inst)
    kind = PolicyKind(args.kind)
    explicit = PolicyParam.from_dict(_load_json(args.policy)) if args.policy else None
    grid = args.grid
    report = adaptive_regret(trace, inst, kind, args.m, args.R_M, grid=grid,
                             method=args.method, explicit=explicit, pitch=args.pitch)
    out = _out_dir(args)
    _write(os.path.join(out, "regret.csv"), rows_to_csv(report.to_rows()))
    summary = {"grid": report.grid, "method": report.method, "intervals": len(report.records),
               "max_regret": report.max_regret()}
    _dump(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))


def _read_cnf(path):
    from .instances import read_dimacs
    with open(path) as fh:
        return read_dimacs(fh.read())


def reduction_check(formula, reg_scale=1e3):
    """Brute-force optimum vs the best assignment-induced gain; returns (k*, best cost, mismatches)."""
    import itertools
    from .instances import assignment_to_K, compile_max3sat
    from .policies import rollout_policy
    inst = compile_max3sat(formula, reg_scale)
    k_star, _ = formula.brute_force()
    best = math.inf
    mismatches = 0
    for v in itertools.product([False, True], repeat=formula.n):
        c = rollout_policy(inst, PolicyKind.FEEDBACK, PolicyParam(assignment_to_K(v)[None])).total_cost
        mismatches += c != -formula.satisfied(v)
        best = min(best, c)
    return k_star, best, mismatches


def cmd_reduce_sat(args):
    from .instances import compile_max3sat
    formula = _read_cnf(args.cnf)
    inst = compile_max3sat(formula, args.reg_scale)
    out = _out_dir(args)
    _write(os.path.join(out, "instance.json"), inst.to_json())
    summary = {"n": formula.n, "m": formula.m, "T": inst.T}
    if formula.n <= 16:
        summary["k_star"] = formula.brute_force()[0]
    _dump(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))


def cmd_verify_assumptions(args):
    inst = _load_instance(args.file)
    rep = verify_assumptions(inst, args.C1, args.rho1, args.R_w, h_max=args.h_max)
    print(json.dumps({"ok": rep.ok, "R_nat": rep.R_nat, "R_G": rep.R_G,
                      "violation": rep.violation, "max_w": rep.max_w}))
    if not rep.ok:
        raise ValidationFailure(f"assumption violated: {rep.violation}")


def cmd_verify_reduction(args):
    formula = _read_cnf(args.cnf)
    k_star, best, mism = reduction_check(formula, args.reg_scale)
    print(json.dumps({"k_star": k_star, "best_assignment_cost": best, "mismatches": mism}))
    if mism or best != -k_star:
        raise ValidationFailure("reduction check failed")


def cmd_verify_working_sets(args):
    from .estimation import working_set_audit
    bad = working_set_audit(args.T)
    print(json.dumps({"T": args.T, "failures": len(bad), "first": bad[:5]}))
    if bad:
        raise ValidationFailure("working-set properties failed")


# ---------------------------------------------------------------- parser

def build_parser():
    ap = argparse.ArgumentParser(prog="ltvctrl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON file whose fields override the flags")
        if seed:
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory (default: .)")

    inst = sub.add_parser("instance", help="generate or inspect instances")
    isub = inst.add_subparsers(dest="action", required=True)
    g = isub.add_parser("gen")
    g.add_argument("generator", choices=["dsigma", "separation", "unstable_scalar", "kswitch",
                                         "lti_scalar", "sat", "json"])
    g.add_argument("--params", help="generator parameters as JSON")
    common(g)
    g.set_defaults(func=cmd_instance_gen)
    i = isub.add_parser("inspect")
    i.add_argument("file")
    i.set_defaults(func=cmd_instance_inspect)

    r = sub.add_parser("run", help="run an algorithm")
    r.add_argument("algorithm", choices=["drc-ogd", "ada-pred", "ada-ctrl", "exp3", "zero"])
    r.add_argument("--instance", help="instance JSON file")
    r.add_argument("--params", help="algorithm parameters as JSON")
    common(r)
    r.set_defaults(func=cmd_run)

    rg = sub.add_parser("regret", help="interval regret of a trace")
    rg.add_argument("--instance", required=True)
    rg.add_argument("--trace", required=True, help="trace.csv written by 'run'")
    rg.add_argument("--kind", choices=[k.value for k in PolicyKind], default="drc")
    rg.add_argument("--m", type=int, default=1)
    rg.add_argument("--R-M", dest="R_M", type=float, default=1.0)
    rg.add_argument("--grid", default="dyadic", choices=["dyadic", "all", "segments"])
    rg.add_argument("--method", default="grid", choices=["grid", "descent"])
    rg.add_argument("--pitch", type=float, default=1e-2)
    rg.add_argument("--policy", help="explicit comparator PolicyParam JSON")
    common(rg, seed=False)
    rg.set_defaults(func=cmd_regret)

    s = sub.add_parser("reduce-sat", help="compile a DIMACS CNF into an LTV instance")
    s.add_argument("cnf")
    s.add_argument("--reg-scale", type=float, default=1e3)
    common(s, seed=False)
    s.set_defaults(func=cmd_reduce_sat)

    v = sub.add_parser("verify", help="property checks")
    vsub = v.add_subparsers(dest="what", required=True)
    va = vsub.add_parser("assumptions")
    va.add_argument("file")
    va.add_argument("--C1", type=float, required=True)
    va.add_argument("--rho1", type=float, required=True)
    va.add_argument("--R-w", dest="R_w", type=float, required=True)
    va.add_argument("--h-max", dest="h_max", type=int, default=None)
    va.set_defaults(func=cmd_verify_assumptions)
    vr = vsub.add_parser("reduction")
    vr.add_argument("cnf")
    vr.add_argument("--reg-scale", type=float, default=1e3)
    vr.set_defaults(func=cmd_verify_reduction)
    vw = vsub.add_parser("working-sets")
    vw.add_argument("--T", type=int, default=10 ** 5)
    vw.set_defaults(func=cmd_verify_working_sets)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except (ValidationFailure, DimensionError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, DivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
