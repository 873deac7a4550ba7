import json
import subprocess
import sys

import pytest

from balayage import cli
from balayage.potential import SolverError, read_gfd

ELLIPSE = {"kind": "ellipsoid", "dim": 2, "center": [0.0, 0.0], "radii": [0.5, 1.0]}
ELLIPSOID_112 = {"kind": "ellipsoid", "dim": 3, "center": [0.0, 0.0, 0.0], "radii": [1.0, 1.0, 0.5]}
DISK4 = {"kind": "ball", "dim": 2, "center": [0.0, 0.0], "r": 4.0}


def _config(tmp_path, name, **data):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return str(path)


def _run(*args):
    return subprocess.run([sys.executable, "-m", "balayage", *args], capture_output=True, text=True)


def test_oracle_prints_the_closed_form(tmp_path):
    cfg = _config(tmp_path, "c", domain=ELLIPSOID_112)
    proc = _run("oracle", "--config", cfg, "--out", str(tmp_path / "o"))
    assert proc.returncode == 0, proc.stderr
    rec = json.loads(proc.stdout)
    assert rec["lambda1"] == pytest.approx(0.75)
    assert (tmp_path / "o" / "report.json").exists()
    assert (tmp_path / "o" / "config.echo.json").exists()


def test_identical_runs_give_identical_bytes(tmp_path):
    bal = {"atoms": [{"location": [0.0, 0.0], "mass": 6.283185307179586}], "nu": 2.0}
    cfg = _config(tmp_path, "b", domain=DISK4, resolution=48, balayage=bal)
    lam = _config(tmp_path, "l", domain=ELLIPSE, degree=4)
    for command, config, files in (
        ("balayage", cfg, ["report.json", "report.csv", "eta.gfd", "deficiency.gfd", "saturated.gfd"]),
        ("lambda1", lam, ["report.json", "report.csv", "residuals.csv"]),
    ):
        outs = [tmp_path / f"{command}{k}" for k in range(2)]
        for out in outs:
            proc = _run(command, "--config", config, "--out", str(out), "--seed", "7")
            assert proc.returncode == 0, proc.stderr
        for f in files:
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_balayage_outputs_are_readable(tmp_path):
    bal = {"atoms": [{"location": [0.0, 0.0], "mass": 6.283185307179586}], "nu": 2.0}
    cfg = _config(tmp_path, "b", domain=DISK4, resolution=64, balayage=bal)
    assert cli.main(["balayage", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["saturated_components"] == 1
    assert rep["residual"] <= 1e-8
    eta, origin, h = read_gfd(tmp_path / "b" / "eta.gfd")
    assert eta.shape == tuple(rep["grid"]["shape"])
    assert h == rep["grid"]["h"]


def test_brenier_writes_the_assignment(tmp_path):
    cfg = _config(tmp_path, "t", domain=ELLIPSE, n_transport=200)
    assert cli.main(["brenier", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    rows = (tmp_path / "t" / "assignment.csv").read_text().splitlines()
    assert rows[0] == "source,target,x0,x1,y0,y1"
    assert len(rows) == 201
    targets = sorted(int(r.split(",")[1]) for r in rows[1:])
    assert targets == list(range(200))


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = _config(tmp_path, "bad", domain=ELLIPSE, tolerance={"verification": 1e-3})
    code = cli.main(["lambda1", "--config", cfg, "--out", str(tmp_path / "x")])
    assert code == 2
    reason = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert reason["check"] == "ConfigError" and reason["exit_code"] == 2


def test_thin_annulus_exits_2_with_diagnostic(tmp_path, capsys):
    thin = {"kind": "annulus", "dim": 2, "center": [0.0, 0.0], "r": 1.0, "R": 1.05}
    cfg = _config(tmp_path, "thin", domain=thin, resolution=32)
    out = tmp_path / "thin"
    assert cli.main(["balayage", "--config", cfg, "--out", str(out)]) == 2
    reason = json.loads((out / "reason.json").read_text())
    assert reason["check"] == "GeometryError"
    assert "4h" in reason["message"]


def test_failed_check_exits_1_with_margin(tmp_path):
    cfg = _config(tmp_path, "tight", domain=ELLIPSE, degree=2, tolerances={"oracle_relative": 1e-9})
    out = tmp_path / "tight"
    assert cli.main(["lambda1", "--config", cfg, "--out", str(out)]) == 1
    reason = json.loads((out / "reason.json").read_text())
    assert reason["check"] == "oracle"
    assert reason["margin"] < 0


def test_solver_failure_exits_3(tmp_path, monkeypatch):
    def stuck(*args, **kwargs):
        raise SolverError("projected SOR did not converge", 1e-3, 10)

    monkeypatch.setattr(cli, "partial_balayage", stuck)
    cfg = _config(tmp_path, "s", domain=DISK4, resolution=32, balayage={"density": 1.0})
    out = tmp_path / "s"
    assert cli.main(["balayage", "--config", cfg, "--out", str(out)]) == 3
    reason = json.loads((out / "reason.json").read_text())
    assert reason["check"] == "convergence" and reason["margin"] == 1e-3


def test_verify_needs_the_suite_flag():
    assert cli.main(["verify"]) == 2


def test_seed_must_fit_in_64_bits(tmp_path):
    cfg = _config(tmp_path, "c", domain=ELLIPSE)
    assert cli.main(["oracle", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", str(2**64)]) == 2


def test_proof_trace_on_a_ball_short_circuits(tmp_path):
    cfg = _config(tmp_path, "p", domain={"kind": "ball", "dim": 2, "center": [0.0, 0.0], "r": 1.0})
    assert cli.main(["proof-trace", "--config", cfg, "--out", str(tmp_path / "p")]) == 0
    rep = json.loads((tmp_path / "p" / "report.json").read_text())
    assert rep["short_circuit"] and rep["bound"] == rep["r_D"]


def test_verify_suite_passes(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["verify", "--suite", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["summary"] == {"cases": 7, "passed": 7}
    assert [r["name"] for r in rep["rows"]] == sorted(r["name"] for r in rep["rows"])
    assert all(r["lambda1_direct"] <= r["r_Omega"] + 1e-3 for r in rep["rows"])
    assert (out / "suite.csv").read_text().count("\n") == 8
