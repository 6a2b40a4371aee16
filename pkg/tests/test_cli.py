import io
import json
import subprocess
import sys

import numpy as np
import pytest

from eqstop.cli import main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_example_run_all_checks():
    code, text = run("example", "ex5_1", "--run-all-checks")
    assert code == 0
    data = json.loads(text)
    assert data["all_passed"]
    assert data["annotations"]["psi"] == [0, 0.285714285714, 1.14285714286, 2]
    assert {c["name"] for c in data["checks"]} >= {"psi", "equilibrium"}


def test_variance_walk_figure():
    code, text = run("variance-walk", "--M", "100", "--emit-figure")
    lines = text.splitlines()
    assert code == 0 and lines[0] == "i,x_i,J" and len(lines) == 102
    assert lines[51] == "50,50,1875"


def test_myopic_cycle_labelled():
    code, text = run("myopic", "--example", "ex_no_equilibrium", "--start", "1,1,1,1")
    data = json.loads(text)
    assert code == 0 and data["termination"] == "cycle" and data["cycle_length"] == 4


def test_round_trip(tmp_path):
    code, text = run("example", "ex5_1")
    path = tmp_path / "m.json"
    path.write_text(text)
    assert run("validate", "--model", str(path))[0] == 0
    a = run("eval", "--model", str(path), "--strategy", "1,1/2,0,1")[1]
    b = run("eval", "--example", "ex5_1", "--strategy", "1,1/2,0,1")[1]
    assert a == b
    assert "2,x3,0,1.14285714286,0.142857142857" in a


def test_determinism():
    args = ("simulate", "--example", "ex5_1", "--strategy", "1,1/2,0,1", "--state", "x3",
            "--paths", "5000", "--seed", "4")
    assert run(*args) == run(*args)


@pytest.mark.parametrize("argv,expected", [
    (("check", "--example", "ex_two_equilibria", "--strategy", "0,1"), '"is_equilibrium": true'),
    (("k", "--example", "ex5_1", "--strategy", "1,1/2,0,1", "--state", "2", "--q", "0"), "0.142857142857"),
    (("best-response", "--example", "ex5_1", "--strategy", "1,1/2,0,1"), "1,x2,[0;1],1,0,convex"),
    (("enumerate", "--example", "ex_two_equilibria"), "01,2,2\n11,1,2"),
    (("purify", "--example", "ex_two_equilibria", "--strategy", "1,1"), "1,1"),
    (("graph", "--example", "ex_no_equilibrium", "--format", "csv"), "1111,1011,edge"),
    (("characterize", "--example", "variance_walk(3)", "--phi", "0,1.5,3,4.5", "--psi", "0,1/2,1,3/2"),
     '"holds": true'),
    (("stability", "global", "--example", "ex_global_stable", "--strategy", "1,1/3", "--samples", "5"),
     '"passed": true'),
    (("threshold-scan", "--gamma", "0.07", "--n", "18"), "16,18,"),
    (("eval", "--example", "ex5_1", "--strategy", "1,1/2,0,1", "--truncation", "400"), "state,label,phi"),
])
def test_commands(argv, expected):
    code, text = run(*argv)
    assert code == 0
    assert expected in text


def test_threshold_figure():
    code, text = run("threshold-scan", "--gamma", "0.07", "--n", "18", "--emit-figure", "16")
    assert code == 0 and text.startswith("i,x_i,H,J\n1,0,,0\n")


def test_stability_local_unstable():
    code, text = run("stability", "local", "--example", "variance_walk(3)", "--strategy", "1,0,0,1/4",
                     "--eps", "1e-3", "--samples", "3")
    assert code == 0 and json.loads(text)["passed"] is False


def test_domain_errors_exit_one(capsys, tmp_path):
    assert run("purify", "--example", "ex5_1", "--strategy", "1,1/2,0,1")[0] == 1
    assert "strictly convex" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"states": [{"label": "a", "value": 0}, {"label": "b", "value": 1}],
                               "transition": [[0, 1], [1, 0]]}))
    code, text = run("validate", "--model", str(bad))
    assert code == 1 and "no absorbing state" in text
    assert run("eval", "--model", str(tmp_path / "missing.json"), "--strategy", "1")[0] == 1
    assert run("example", "nope")[0] == 1


def test_usage_errors_exit_two(capsys):
    assert run("eval", "--example", "ex5_1", "--strategy", "1,x,0,1")[0] == 2
    assert run("eval", "--example", "ex5_1", "--strategy", "1,0,1")[0] == 2
    assert run("eval", "--strategy", "1")[0] == 2
    assert run("frobnicate")[0] == 2
    err = capsys.readouterr().err
    assert "usage" in err


def test_payoff_override_and_missing_payoff(tmp_path):
    m = {"states": [{"label": "a", "value": 1}, {"label": "b", "value": 2}],
         "transition": [["1/2", "1/2"], [0, 1]]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(m))
    assert run("eval", "--model", str(path), "--strategy", "1,1")[0] == 2
    code, text = run("check", "--model", str(path), "--gamma", "3", "--strategy", "0,1")
    assert code == 0 and json.loads(text)["J"] == [2.0, 2.0]
    code, _ = run("eval", "--model", str(path), "--payoff", "variance", "--strategy", "1,1")
    assert code == 0


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "eqstop.cli", "variance-walk", "--M", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["strategy"] == [1, 0, 0, 0.25]
