import json
import subprocess

import numpy as np
import pytest

from landing_scp.cli import EXIT_ERROR, EXIT_MAX_ITER, EXIT_OK, main
from landing_scp.subproblem import load_dump


@pytest.fixture(scope="module")
def artifact_a(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "A"
    code = main(["solve", "--scenario", "A", "--alignment", "multiphase", "--out", str(out), "--dense", "4"])
    return code, out


def test_scenarios_lists_builtins(capsys):
    assert main(["scenarios"]) == EXIT_OK
    err = capsys.readouterr().err
    for name in ("A", "B", "C", "ctcs_demo", "obstacle_demo", "crosswind_left", "crosswind_right"):
        assert name in err


def test_console_script():
    res = subprocess.run(["landing-scp", "scenarios"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "" and "obstacle_demo" in res.stderr


def test_unknown_scenario(capsys):
    assert main(["solve", "--scenario", "Z"]) == EXIT_ERROR
    assert "unknown scenario" in capsys.readouterr().err


def test_usage_errors():
    assert main([]) == EXIT_ERROR
    assert main(["solve"]) == EXIT_ERROR
    assert main(["solve", "--scenario", "A", "--config", "x.json"]) == EXIT_ERROR
    assert main(["solve", "--scenario", "A", "--gamma", "0.5"]) == EXIT_ERROR
    assert main(["--help"]) == EXIT_OK


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"limits": {"phi_min": 20, "phi_max": 10}}))
    assert main(["solve", "--config", str(cfg)]) == EXIT_ERROR
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR


def test_max_iteration_exit(tmp_path):
    assert main(["solve", "--scenario", "B", "--max-iter", "1"]) == EXIT_MAX_ITER


def test_solve_writes_artifact(artifact_a):
    code, out = artifact_a
    assert code == EXIT_OK
    for name in ("nodes.csv", "dense.csv", "run_log.json", "spec.json", "plots/altitude.csv"):
        assert (out / name).is_file()
    log = json.loads((out / "run_log.json").read_text())
    assert log["outcome"] == "Success" and log["records"]
    assert json.loads((out / "spec.json").read_text())["name"] == "A"


def test_audit_matches_report(artifact_a, tmp_path):
    _, out = artifact_a
    code = main(["audit", "--artifact", str(out), "--json", str(tmp_path / "audit.json")])
    rep = json.loads((tmp_path / "audit.json").read_text())
    assert code == (EXIT_OK if rep["ok"] else EXIT_ERROR)
    assert rep["checks"]["node_constraints"] and rep["checks"]["alignment"]
    assert rep["checks"]["terminal_position"]


def test_audit_corrupt(artifact_a, tmp_path):
    _, out = artifact_a
    bad = tmp_path / "bad"
    bad.mkdir()
    lines = (out / "nodes.csv").read_text().splitlines()
    lines[3] = lines[3].replace(",", ";", 2)
    (bad / "nodes.csv").write_text("\n".join(lines))
    (bad / "spec.json").write_text((out / "spec.json").read_text())
    assert main(["audit", "--artifact", str(bad)]) == EXIT_ERROR
    assert main(["audit", "--artifact", str(tmp_path / "nothing")]) == EXIT_ERROR


def test_montecarlo_empty(tmp_path, capsys):
    assert main(["montecarlo", "--n", "0", "--out", str(tmp_path)]) == EXIT_OK
    err = capsys.readouterr().err
    assert "gamma=1:" in err and "gamma=1.2:" in err
    assert (tmp_path / "summary.csv").read_text().count("\n") == 3


def test_montecarlo_flag_errors():
    assert main(["montecarlo", "--bases", "A,Q", "--n", "0"]) == EXIT_ERROR
    assert main(["montecarlo", "--n", "-1"]) == EXIT_ERROR
    assert main(["montecarlo", "--gammas", "0.5", "--n", "0"]) == EXIT_ERROR
    assert main(["montecarlo", "--gammas", "x", "--n", "0"]) == EXIT_ERROR


def test_dump_subproblem(tmp_path):
    path = tmp_path / "qp.txt"
    assert main(["dump-subproblem", "--scenario", "B", "--iteration", "2", "--out", str(path)]) == EXIT_OK
    qp = load_dump(path)
    assert qp.A.shape[1] == qp.P.shape[0] == qp.q.size
    assert np.all(qp.lo <= qp.hi)
    assert main(["dump-subproblem", "--scenario", "B", "--iteration", "0", "--out", str(path)]) == EXIT_ERROR
