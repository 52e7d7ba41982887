import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dsm.cli import (EXIT_AUDIT, EXIT_CERTIFICATE, EXIT_INTEGRATION, EXIT_OK, EXIT_USAGE,
                     RunReport, main, read_trajectory_csv)


def run(tmp_path, *argv):
    return main(list(argv) + ["--out-dir", str(tmp_path)])


def report(path):
    return json.loads((path / "report.json").read_text())


def test_solve_twobytwo_newton(tmp_path):
    assert run(tmp_path, "solve", "--problem", "twobytwo", "--field", "newton") == EXIT_OK
    rep = report(tmp_path / "solve-twobytwo-newton")
    assert rep["exit_status"] == 0
    assert rep["trajectory"]["final_residual"] <= 1e-10 * (1 + 1e-6)
    assert rep["envelope"]["violations"] == 0
    csv = read_trajectory_csv(tmp_path / "solve-twobytwo-newton" / "trajectory.csv")
    assert list(csv) == ["t", "u_1", "u_2", "residual", "envelope", "within_ball"]
    assert np.all(csv["residual"] <= csv["envelope"] * (1 + 1e-5))
    assert np.all(csv["within_ball"] == 1)


def test_negative_entry_exits_2_with_and_without_force(tmp_path):
    args = ["solve", "--problem", "modified-newton-fail", "--field", "modified-newton"]
    assert run(tmp_path, *args) == EXIT_CERTIFICATE
    run_dir = tmp_path / "solve-modified-newton-fail-modified-newton"
    assert not (run_dir / "trajectory.csv").exists()
    assert run(tmp_path, *args, "--force") == EXIT_CERTIFICATE
    assert (run_dir / "trajectory.csv").exists()
    assert report(run_dir)["trajectory"] is not None


def test_affine_csv_closed_form(tmp_path):
    assert run(tmp_path, "solve", "--problem", "affine-1d", "--field", "newton",
               "--max-time", "1") == EXIT_OK
    csv = read_trajectory_csv(tmp_path / "solve-affine-1d-newton" / "trajectory.csv")
    assert csv["t"][-1] == 1.0
    assert abs(csv["u_1"][-1] - (1 - math.exp(-1))) <= 1e-6


def test_audit_with_doubled_rate_exits_3(tmp_path):
    assert run(tmp_path, "audit", "--problem", "affine-1d", "--field", "newton",
               "--c1-scale", "2") == EXIT_AUDIT
    rep = report(tmp_path / "audit-affine-1d-newton")
    assert rep["envelope"]["violations"] > 0
    assert run(tmp_path, "audit", "--problem", "affine-1d", "--field", "newton") == EXIT_OK


def test_certify_prints_checks(tmp_path, capsys):
    assert run(tmp_path, "certify", "--problem", "twobytwo", "--field", "newton",
               "--radius", "0.5") == EXIT_OK
    out = capsys.readouterr().out
    assert "ball" in out and "method.newton" in out and "margin=" in out
    cert = report(tmp_path / "certify-twobytwo-newton")["certificate"]
    assert all(c["margin"] >= 0 for c in cert["checks"])
    assert run(tmp_path, "certify", "--problem", "modified-newton-fail",
               "--field", "modified-newton") == EXIT_CERTIFICATE


def test_config_rates_margin(tmp_path):
    cfg = {"problem": {"type": "affine", "matrix": [[1.0]], "offset": [-0.4], "name": "shift"},
           "field": "newton", "ball": {"center": [0.0], "radius": 1.0},
           "rates": {"g1": {"kind": "constant", "value": 1.0},
                     "g2": {"kind": "constant", "value": 2.0}}}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert run(tmp_path, "certify", "--config", str(path)) == EXIT_OK
    checks = {c["condition_id"]: c for c in
              report(tmp_path / "certify-shift-newton")["certificate"]["checks"]}
    assert checks["ball-config-rates"]["lhs"] == pytest.approx(0.8, abs=1e-15)
    assert checks["ball-config-rates"]["margin"] == pytest.approx(0.2, abs=1e-15)
    assert run(tmp_path, "solve", "--config", str(path)) == EXIT_OK


def test_integration_failure_exits_4(tmp_path):
    cfg = {"problem": "affine-1d", "field": "newton", "integration": {"max_steps": 1}}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert run(tmp_path, "solve", "--config", str(path)) == EXIT_INTEGRATION
    assert "integration_error" in report(tmp_path / "solve-affine-1d-newton")["extra"]


@pytest.mark.parametrize("argv", [
    ["solve", "--problem", "nope", "--field", "newton"],
    ["solve", "--problem", "twobytwo", "--field", "nope"],
    ["solve", "--problem", "psd-linear", "--field", "newton"],
    ["solve", "--problem", "twobytwo", "--field", "newton", "--rel-tol", "-1"],
    ["solve", "--problem", "twobytwo", "--field", "newton", "--samples", "10"],
    ["solve", "--problem", "twobytwo", "--field", "newton", "--config", "/does/not/exist"],
    ["demo", "linear", "--margin", "1.5"],
])
def test_usage_errors(tmp_path, argv):
    assert run(tmp_path, *argv) == EXIT_USAGE


def test_parser_errors_use_usage_status():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "solve", "--problem", "twobytwo", "--field", "gradient") == EXIT_OK
    for name in ("trajectory.csv", "report.json"):
        assert (a / "solve-twobytwo-gradient" / name).read_bytes() == \
            (b / "solve-twobytwo-gradient" / name).read_bytes()


def test_timing_is_opt_in(tmp_path):
    run(tmp_path, "certify", "--problem", "affine-1d", "--field", "newton")
    assert report(tmp_path / "certify-affine-1d-newton")["timing"] is None
    run(tmp_path, "certify", "--problem", "affine-1d", "--field", "newton", "--timing")
    assert report(tmp_path / "certify-affine-1d-newton")["timing"]["wall_seconds"] >= 0


def test_run_report_round_trip(tmp_path):
    run(tmp_path, "solve", "--problem", "twobytwo", "--field", "newton")
    text = (tmp_path / "solve-twobytwo-newton" / "report.json").read_text()
    rep = RunReport.from_json(text)
    assert rep.to_json() + "\n" == text
    assert RunReport.from_dict(rep.to_dict()) == rep
    with pytest.raises(ValueError):
        RunReport.from_dict({**rep.to_dict(), "bogus": 1})


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DSM_OUT_DIR", str(tmp_path / "env"))
    assert main(["certify", "--problem", "affine-1d", "--field", "newton"]) == EXIT_OK
    assert (tmp_path / "env" / "certify-affine-1d-newton" / "report.json").exists()


def test_custom_fields_run_clean(tmp_path):
    for name in ("scaled-newton-a1", "scaled-newton-a3"):
        assert run(tmp_path, "solve", "--problem", name, "--field", "custom") == EXIT_OK
    rep = report(tmp_path / "solve-scaled-newton-a1-custom")
    assert rep["trajectory"]["exit_reason"] == "FiniteHorizonReached"


def test_demo_linear(tmp_path, capsys):
    assert run(tmp_path, "demo", "linear", "--T", "10") == EXIT_OK
    out = capsys.readouterr().out
    assert "0.60653066" in out
    rep = report(tmp_path / "demo-linear")
    assert rep["extra"]["alpha_zero"]["error"] <= 1e-10
    assert rep["extra"]["finite_q"]["error"] <= 1e-6
    row = [r for r in rep["extra"]["witness"] if r["T"] == 10.0][0]
    assert row["deviation"] == math.exp(-0.5)


def test_demo_monotone_report_is_consistent(tmp_path):
    status = run(tmp_path, "demo", "monotone", "--max-time", "20")
    rep = report(tmp_path / "demo-monotone")
    assert status == rep["exit_status"]
    assert rep["certificate"]["checks"]
    assert (status == EXIT_OK) == (rep["envelope"]["violations"] == 0)
    csv = read_trajectory_csv(tmp_path / "demo-monotone" / "trajectory.csv")
    assert csv["t"][-1] == 20.0


def test_corpus_list_json(capsys):
    assert main(["corpus", "list", "--json"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    assert {"twobytwo", "psd-linear", "monotone-cubic"} <= {r["name"] for r in rows}


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dsm", "corpus", "list"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "twobytwo" in proc.stdout
