import csv
import json

import numpy as np
import pytest

from ltvctrl.cli import main
from ltvctrl.core import LtvInstance
from ltvctrl.costs import QuadraticTracking


def gen(tmp_path, generator, params, seed=0):
    out = tmp_path / generator
    assert main(["instance", "gen", generator, "--params", json.dumps(params),
                 "--seed", str(seed), "--out", str(out)]) == 0
    return out / "instance.json"


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_instance_gen_and_inspect(tmp_path, capsys):
    path = gen(tmp_path, "kswitch", {"k": 2, "T": 40, "d_x": 2, "d_u": 1})
    inst = LtvInstance.from_json(path.read_text())
    assert (inst.T, inst.d_x, inst.d_u) == (40, 2, 1)
    capsys.readouterr()
    assert main(["instance", "inspect", str(path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["T"] == 40 and info["cost"] == inst.cost.kind


def test_run_writes_trace_and_regret(tmp_path, capsys):
    path = gen(tmp_path, "lti_scalar", {"a": 0.5, "b": 1.0, "T": 64})
    out = tmp_path / "run"
    assert main(["run", "drc-ogd", "--instance", str(path), "--params", '{"eta": 0.05}',
                 "--out", str(out)]) == 0
    rows = read_csv(out / "trace.csv")
    assert len(rows) == 64 and {"t", "cost", "x1", "u1"} <= set(rows[0])
    total = json.loads((out / "summary.json").read_text())["total_cost"]
    assert sum(float(r["cost"]) for r in rows) == pytest.approx(total)
    rg = tmp_path / "regret"
    assert main(["regret", "--instance", str(path), "--trace", str(out / "trace.csv"),
                 "--kind", "drc", "--out", str(rg)]) == 0
    summary = json.loads((rg / "summary.json").read_text())
    assert summary["intervals"] == len(read_csv(rg / "regret.csv")) == 127


def test_run_with_config_is_reproducible(tmp_path):
    cfg = {"instance": {"generator": "lti_scalar", "params": {"a": 0.5, "b": 1.0, "T": 50}},
           "algorithm": {"name": "zero"}, "seeds": [0, 1],
           "comparator": {"kind": "drc", "m": 1, "R_M": 1.0}}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    texts = []
    for name in ("a", "b"):
        assert main(["run", "zero", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
        texts.append((tmp_path / name / "results.csv").read_bytes())
    assert texts[0] == texts[1]


def test_ada_pred_run(tmp_path):
    out = tmp_path / "ap"
    assert main(["run", "ada-pred", "--params", '{"T": 128}', "--out", str(out)]) == 0
    assert len(read_csv(out / "intervals.csv")) == 255


def test_sat_reduction_commands(tmp_path, capsys):
    cnf = tmp_path / "f.cnf"
    cnf.write_text("p cnf 2 2\n1 2 0\n-1 0\n")
    assert main(["reduce-sat", str(cnf), "--out", str(tmp_path / "sat")]) == 0
    summary = json.loads((tmp_path / "sat" / "summary.json").read_text())
    assert summary == {"n": 2, "m": 2, "T": 8, "k_star": 2}
    assert main(["verify", "reduction", str(cnf)]) == 0
    bad = tmp_path / "bad.cnf"
    bad.write_text("1 2 0\n")
    assert main(["verify", "reduction", str(bad)]) == 2


def test_verify_assumptions_exit_codes(tmp_path):
    path = gen(tmp_path, "kswitch", {"k": 1, "T": 30})
    assert main(["verify", "assumptions", str(path), "--C1", "1", "--rho1", "0.9", "--R-w", "1"]) == 0
    T = 20
    grow = LtvInstance(np.full((T, 1, 1), 1.1), np.ones((T, 1, 1)), np.zeros((T, 1)),
                       QuadraticTracking(np.eye(1), np.eye(1), T))
    gp = tmp_path / "grow.json"
    gp.write_text(grow.to_json())
    assert main(["verify", "assumptions", str(gp), "--C1", "1", "--rho1", "0.9", "--R-w", "1"]) == 2


def test_working_set_check():
    assert main(["verify", "working-sets", "--T", "2000"]) == 0


def test_exit_codes(tmp_path):
    assert main(["run", "zero"]) == 2                             # no instance given
    assert main(["instance", "inspect", str(tmp_path / "missing.json")]) == 2
    T = 40
    blow = LtvInstance(np.full((T, 1, 1), 5.0), np.ones((T, 1, 1)), np.ones((T, 1)),
                       QuadraticTracking(np.eye(1), np.eye(1), T))
    bp = tmp_path / "blow.json"
    bp.write_text(blow.to_json())
    assert main(["run", "exp3", "--instance", str(bp), "--params",
                 '{"R_K": 0.5, "eps": 0.5, "B": 1.0}', "--out", str(tmp_path / "x")]) == 3
