import json

import pytest

import turnpike_lab
from config import load_config

SMALL = """
[problem]
control = 0, 0.5
beta = 10
horizon = 0.5
target = 0.5
initial = 2*sin(pi*x)

[disc]
nx = 10
dt = 0.01

[turnpike]
tau = 0.1

[sweep]
horizons = 0.5, 1
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _run(*argv):
    return turnpike_lab.main(list(argv) + ["--quiet"])


def _load(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def test_zero_data_steady_run(tmp_path):
    cfg = _write(tmp_path, """
[problem]
horizon = 2
target = 0
initial = 0

[disc]
nx = 20
dt = 0.01
""")
    out = tmp_path / "out"
    assert _run("steady", "--config", cfg, "--out", str(out)) == 0
    body = _load(out / "steady.json")
    assert body["command"] == "steady"
    assert body["steady"]["Js"] == 0.0
    assert body["steady"]["converged"]
    header = (out / "steady_profiles.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "x,u,y,q"


def test_negative_beta_is_a_config_error(tmp_path):
    cfg = _write(tmp_path, "[problem]\nbeta = -1\n")
    out = tmp_path / "out"
    assert _run("solve", "--config", cfg, "--out", str(out)) == 2
    err = _load(out / "error.json")
    assert err["error"] == "config"
    assert err["command"] == "solve"
    assert any("beta" in v for v in err["violations"])


def test_unknown_key_is_a_config_error(tmp_path):
    cfg = _write(tmp_path, SMALL + "\n[optimizer]\nlearning_rate = 0.1\n")
    out = tmp_path / "out"
    assert _run("optimize", "--config", cfg, "--out", str(out)) == 2
    assert any("learning_rate" in v for v in _load(out / "error.json")["violations"])


def test_missing_config_file(tmp_path):
    out = tmp_path / "out"
    assert _run("solve", "--config", str(tmp_path / "nope.ini"), "--out", str(out)) == 2
    assert (out / "error.json").exists()


def test_solve_writes_long_format_trajectory(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert _run("solve", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "trajectory.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,x,value"
    assert len(lines) == 1 + 51 * 10  # nt = 50, every snapshot, 10 nodes
    t, x, _ = lines[-1].split(",")
    assert float(t) == pytest.approx(0.5)
    assert float(x) == pytest.approx(10.0 / 11.0)


def test_blow_up_exit_code(tmp_path):
    cfg = _write(tmp_path, "[problem]\nhorizon = 10\n\n[disc]\nnx = 20\nnt = 20\n")
    out = tmp_path / "out"
    assert _run("solve", "--config", cfg, "--out", str(out)) == 3
    err = _load(out / "error.json")
    assert err["error"] == "blow_up"
    assert err["suggested_dt"] == pytest.approx(1.0 / 600.0)


def test_divergence_exit_code(tmp_path):
    cfg = _write(tmp_path, """
[problem]
control = 0, 1
beta = 10
horizon = 0.5
target = 1
initial = sin(pi*x)
nonlinearity = zero

[disc]
nx = 10
dt = 0.05

[optimizer]
stepsize_mode = fixed
stepsize = 50
restarts = 1

[turnpike]
tau = 0.1
""")
    out = tmp_path / "out"
    assert _run("optimize", "--config", cfg, "--out", str(out)) == 4
    err = _load(out / "error.json")
    assert err["error"] == "divergence"
    assert err["suggested_stepsize"] == pytest.approx(12.5)


def test_optimize_outputs_and_determinism(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert _run("optimize", "--config", cfg, "--out", str(out)) == 0
    for name in ("result.json", "cost_history.csv", "control.csv", "state.csv", "distance_curves.csv"):
        assert (out / name).exists()
    first = (out / "result.json").read_bytes()
    body = json.loads(first)
    assert body["result"]["label"] == "stationary point"
    assert body["result"]["optimality_residual"] <= 1e-5
    assert body["result"]["sanity"]["below_zero_control"]
    assert (out / "cost_history.csv").read_text(encoding="utf-8").startswith("iter,cost,grad_norm\n")

    assert _run("optimize", "--config", cfg, "--out", str(out)) == 0
    assert (out / "result.json").read_bytes() == first


def test_turnpike_command(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert _run("turnpike", "--config", cfg, "--out", str(out)) == 0
    body = _load(out / "turnpike.json")
    assert body["turnpike"]["verdict"] in ("turnpike confirmed", "not confirmed")
    assert body["quasi_optimal"]["tau"] == 0.1
    assert body["quasi_optimal"]["excess"] >= -1e-9
    header = (out / "norm_curves.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "t,y_inf,ybar_inf,dq_inf"


def test_sweep_command(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert _run("sweep", "--config", cfg, "--out", str(out), "--jobs", "1") == 0
    lines = (out / "sweep.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "T,JT,JT_over_T,Js,gap,yt_l2,ratio"
    assert len(lines) == 3
    body = _load(out / "sweep.json")
    assert body["sweep"]["averages_label"] == "upper-bound check only"
    assert body["config"]["sweep"]["jobs"] == 1


def test_check_command(tmp_path):
    out = tmp_path / "out"
    assert _run("check", "--out", str(out)) == 0
    body = _load(out / "check.json")
    assert body["overall"] == "PASS"
    assert len(body["checks"]) == 7
    assert all(c["status"] in ("PASS", "WARN") for c in body["checks"])


def test_quiet_and_debug_are_exclusive():
    with pytest.raises(SystemExit):
        turnpike_lab.main(["solve", "--quiet", "--debug"])


SHORT = """
[problem]
horizon = 0.5
initial = sin(pi*x)

[disc]
nx = 10
nt = 5
"""


def test_short_horizon_needs_no_turnpike_keys(tmp_path):
    cfg = _write(tmp_path, SHORT)
    out = tmp_path / "out"
    assert _run("solve", "--config", cfg, "--out", str(out)) == 0
    assert load_config(cfg).turnpike.tau == pytest.approx(0.25)
    assert load_config(None).turnpike.tau == 1.0


def test_explicit_tau_must_lie_inside_horizon(tmp_path):
    cfg = _write(tmp_path, SHORT + "\n[turnpike]\ntau = 1\n")
    out = tmp_path / "out"
    assert _run("solve", "--config", cfg, "--out", str(out)) == 2
    assert any("turnpike.tau" in v for v in _load(out / "error.json")["violations"])


def test_single_step_turnpike_run_is_an_analysis_error(tmp_path):
    cfg = _write(tmp_path, SMALL.replace("dt = 0.01", "nt = 1"))
    out = tmp_path / "out"
    assert _run("turnpike", "--config", cfg, "--out", str(out)) == 3
    err = _load(out / "error.json")
    assert err["error"] == "analysis"
    assert err["command"] == "turnpike"
    assert err["suggested_nt"] == 4


def test_value_error_in_a_command_writes_error_json(tmp_path, monkeypatch):
    def broken(cfg):
        raise ValueError("control has shape (1, 2), expected (3, 4)")

    monkeypatch.setitem(turnpike_lab.HANDLERS, "solve", broken)
    out = tmp_path / "out"
    assert _run("solve", "--out", str(out)) == 3
    err = _load(out / "error.json")
    assert err["error"] == "solver"
    assert "expected (3, 4)" in err["message"]
