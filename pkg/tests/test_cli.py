import json
import subprocess
import sys

import pytest

from cmcflow.cli import ConfigError, load_config, run


def _run(args, capsys):
    code = run(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"domain": "ellipse:2,1", "h": 0.2, "dH": 0.1}))
    c = load_config(["flow", "--config", str(cfg), "--h", "0.1"])
    assert c.domain == "ellipse:2,1" and c.h == 0.1 and c.dH == 0.1


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        load_config(["solve", "--config", str(cfg)])


@pytest.mark.parametrize("argv", [["solve", "--h", "-1"], ["solve", "--domain", "disk:-2"],
                                  ["flow", "--dir", "sideways"], ["nope"],
                                  ["hmax", "--tol", "0"], ["solve", "--domain", "ellipse:1"]])
def test_config_errors_exit_1(argv, capsys):
    code, _, err = _run(argv, capsys)
    assert code == 1
    assert json.loads(err)["error"] == "config"


def test_isoperimetric_violation_is_config_error(capsys):
    code, _, err = _run(["solve", "--h", "0.2", "--H", "-1.5"], capsys)
    assert code == 1 and "IsoperimetricViolation" in err


def test_threads_env_caps(monkeypatch):
    monkeypatch.setenv("CMCFLOW_THREADS", "2")
    assert load_config(["flow"]).threads == 2
    assert load_config(["flow", "--threads", "8"]).threads == 2


def test_solve_outputs_and_determinism(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        code, out, _ = _run(["solve", "--domain", "ellipse:2,1", "--H", "-0.05", "--h", "0.1",
                             "--variations", "10", "--out", str(d)], capsys)
        assert code == 0
        outs.append(d)
    s = json.loads((outs[0] / "summary.json").read_text())
    assert s["convexity"]["classification"] == "strictly_concave"
    for name in ("summary.json", "field.txt", "mesh.txt", "stability.csv", "state.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_solve_dq_check(capsys):
    code, out, _ = _run(["solve", "--h", "0.15", "--H", "-0.3", "--variations", "3",
                         "--dq-check"], capsys)
    assert code == 0 and json.loads(out)["dq_check"]["slope"] >= 0.8


def test_flow_trace(tmp_path, capsys):
    code, out, _ = _run(["flow", "--domain", "disk:1", "--h", "0.15", "--dH", "0.1", "--dir", "-",
                         "--grad-cap", "1000", "--H-target", "-0.5", "--out", str(tmp_path)],
                        capsys)
    assert code == 0
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    W = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(b > a for a, b in zip(W, W[1:]))
    assert json.loads(out)["monotonicity_violations"] == 0


def test_hmax_bracket(capsys):
    code, out, _ = _run(["hmax", "--domain", "disk:1", "--h", "0.15", "--tol", "0.02"], capsys)
    lo, hi = json.loads(out)["bracket"]
    assert code == 0 and 0.9 <= lo <= hi <= 1.05


def test_diagnose_writes_nodal_sets(tmp_path, capsys):
    code, out, _ = _run(["diagnose", "--h", "0.15", "--H", "-0.5", "--theta", "0,0.5",
                         "--out", str(tmp_path)], capsys)
    assert code == 0
    s = json.loads(out)
    assert len(s["critical_points"]) == 1
    assert (tmp_path / "nodal_0.0000.csv").exists() and (tmp_path / "nodal_0.5000.csv").exists()
    assert all(r["drift"] < 1e-2 for r in s["rotation"])


def test_verify_subset(capsys):
    code, out, _ = _run(["verify", "--only", "2,5", "--h", "0.1"], capsys)
    assert code == 0
    assert out.count("[PASS]") == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "cmcflow", "solve", "--h", "-1"],
                       capture_output=True, text=True)
    assert r.returncode == 1 and json.loads(r.stderr)["error"] == "config"
