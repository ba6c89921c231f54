import json
import os

import pytest

from epcag_lab.cli import run
from epcag_lab.reporting import load_schema

CONFIG = """
[system]
n = 1
A11 = -1
f1 = 0.5 + 0.1*w1

[grid]
kind = uniform
step = 1.0
offset = 0.0
window = -30 30

[constants]
mu = 1.0
lip = 0.1
h0 = 0.5
"""


def _validate(path):
    jsonschema = pytest.importorskip("jsonschema")
    payload = json.loads(path.read_text())
    jsonschema.validate(payload, load_schema())
    return payload


def test_simulate_csv_and_schema(tmp_path):
    code = run(["simulate", "--problem", "paper-example-1", "--t0", "0",
                "--x0", "1", "--t-end", "3", "-o", str(tmp_path),
                "--stamp", "T"])
    assert code == 0
    csv = tmp_path / "simulate-paper-example-1-T.csv"
    assert csv.exists()
    header = csv.read_text().splitlines()[0]
    assert header == "t,y1,interval_index,frozen_w1"
    _validate(tmp_path / "simulate-paper-example-1-T.json")


def test_simulate_determinism(tmp_path):
    for d in ("a", "b"):
        code = run(["simulate", "--problem", "periodic-coupled", "--t0", "0",
                    "--x0", "0.3", "--t-end", "2", "--seed", "7",
                    "-o", str(tmp_path / d), "--stamp", "T"])
        assert code == 0
    f1 = (tmp_path / "a" / "simulate-periodic-coupled-T.csv").read_bytes()
    f2 = (tmp_path / "b" / "simulate-periodic-coupled-T.csv").read_bytes()
    assert f1 == f2


def test_backcontinue_no_preimage_exit_code(tmp_path):
    code = run(["backcontinue", "--problem", "paper-example-1", "--t0", "1",
                "--x0", "6", "--t-target", "0", "-o", str(tmp_path),
                "--stamp", "T"])
    assert code == 2
    payload = _validate(tmp_path / "backcontinue-paper-example-1-T.json")
    assert payload["results"]["ok"] is False


def test_backcontinue_success(tmp_path):
    code = run(["backcontinue", "--problem", "periodic-coupled", "--t0", "1.5",
                "--x0", "0.4", "--t-target", "0", "-o", str(tmp_path),
                "--stamp", "T"])
    assert code == 0
    payload = _validate(tmp_path / "backcontinue-periodic-coupled-T.json")
    assert all(s["classification"] == "unique" for s in payload["results"]["steps"])


def test_manifold_sweep_files(tmp_path):
    code = run(["manifold", "--problem", "diag-dichotomy", "--side", "stable",
                "--t0", "0", "--grid-of-c=-1:1:11", "-o", str(tmp_path),
                "--stamp", "T"])
    assert code == 0
    csv = tmp_path / "manifold-diag-dichotomy-T.csv"
    rows = csv.read_text().strip().splitlines()
    assert len(rows) == 12  # header + 11 sweep points
    trajs = sorted(tmp_path.glob("manifold-diag-dichotomy-T-trajectory-*.csv"))
    assert len(trajs) == 11
    _validate(tmp_path / "manifold-diag-dichotomy-T.json")


def test_bounded_report_fields(tmp_path):
    code = run(["bounded", "--problem", "forced-scalar", "--window", "0", "5",
                "-o", str(tmp_path), "--stamp", "T"])
    assert code == 0
    payload = _validate(tmp_path / "bounded-forced-scalar-T.json")
    for key in ("bound", "sup_norm", "iterations"):
        assert key in payload["results"]


def test_periodic_report_fields(tmp_path):
    code = run(["periodic", "--problem", "periodic-coupled", "-o", str(tmp_path),
                "--stamp", "T"])
    assert code == 0
    payload = _validate(tmp_path / "periodic-periodic-coupled-T.json")
    res = payload["results"]
    assert (res["k"], res["m"]) == (2, 1)
    assert res["residual"] <= 1e-6


def test_check_exit_reflects_verdict(tmp_path):
    ok = run(["check", "--mu", "1", "--l", "0.01", "--theta", "1",
              "-o", str(tmp_path), "--stamp", "T1"])
    assert ok == 0
    bad = run(["check", "--mu", "2", "--l", "0.2", "--theta", "1",
               "-o", str(tmp_path), "--stamp", "T2"])
    assert bad == 4


def test_check_with_problem(tmp_path, capsys):
    code = run(["check", "--problem", "paper-example-1", "--l", "0.01",
                "--mu", "2", "--theta", "1", "-o", str(tmp_path), "--stamp", "T"])
    out = capsys.readouterr().out
    assert "backward_uniqueness" in out
    assert code in (0, 4)
    _validate(tmp_path / "check-paper-example-1-T.json")


def test_reduce_summary(tmp_path, capsys):
    code = run(["reduce", "--problem", "diag-dichotomy", "-o", str(tmp_path),
                "--stamp", "T"])
    assert code == 0
    out = capsys.readouterr().out
    assert "contracting dim 1" in out
    _validate(tmp_path / "reduce-diag-dichotomy-T.json")


def test_config_file_roundtrip(tmp_path):
    cfg = tmp_path / "sys.cfg"
    cfg.write_text(CONFIG)
    code = run(["simulate", str(cfg), "--t0", "0", "--x0", "0.2",
                "--t-end", "2", "-o", str(tmp_path), "--stamp", "T"])
    assert code == 0
    assert (tmp_path / "simulate-sys-T.csv").exists()


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(CONFIG.replace("f1 = 0.5 + 0.1*w1", "f1 = 0.5 + 0.1*q1"))
    code = run(["simulate", str(cfg), "--t0", "0", "--x0", "0.2",
                "--t-end", "2", "-o", str(tmp_path), "--stamp", "T"])
    assert code == 1


def test_missing_system_is_config_error(tmp_path):
    code = run(["simulate", "--t0", "0", "--x0", "1", "--t-end", "1",
                "-o", str(tmp_path)])
    assert code == 1


def test_out_env_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("EPCAG_LAB_OUT", str(tmp_path / "env-out"))
    code = run(["check", "--mu", "1", "--l", "0.0", "--theta", "1",
                "--stamp", "T"])
    assert code == 0
    assert (tmp_path / "env-out" / "check-direct-T.json").exists()


def test_verify_subset(tmp_path):
    code = run(["verify", "--only", "1,5", "-o", str(tmp_path), "--stamp", "T"])
    assert code == 0
    payload = _validate(tmp_path / "verify-registry-T.json")
    assert payload["results"]["all_passed"] is True
    assert [c["number"] for c in payload["results"]["criteria"]] == [1, 5]


def test_integration_failure_exit_code(tmp_path):
    # double-exponential growth trips the overflow guard well before t = 8
    code = run(["simulate", "--problem", "paper-example-1", "--t0", "0",
                "--x0", "1", "--t-end", "8", "-o", str(tmp_path), "--stamp", "T"])
    assert code == 3


def test_check_labels_sampled_estimates(tmp_path, capsys):
    cfg = tmp_path / "est.cfg"
    cfg.write_text(CONFIG.replace("mu = 1.0", "mu = estimate"))
    code = run(["check", str(cfg), "--theta", "1", "-o", str(tmp_path),
                "--stamp", "T"])
    out = capsys.readouterr().out
    assert "based on sampled estimates" in out
    assert code in (0, 4)
    payload = _validate(tmp_path / "check-est-T.json")
    assert payload["results"]["based_on_sampled_estimates"] == ["mu"]


def test_csv_floats_round_trip_exactly():
    from epcag_lab.reporting import fmt

    rng = __import__("numpy").random.default_rng(8)
    for x in rng.standard_normal(200) * 10.0 ** rng.integers(-12, 12, 200):
        assert float(fmt(float(x))) == float(x)


def test_config_run_and_tolerance_overrides(tmp_path):
    cfg = tmp_path / "tuned.cfg"
    cfg.write_text(CONFIG + "\n[run]\nseed = 11\n\n[tolerances]\nsteady_tol = 1e-10\nsubsteps = 32\n")
    code = run(["bounded", str(cfg), "--window", "0", "3", "-o", str(tmp_path),
                "--stamp", "T"])
    assert code == 0
    payload = _validate(tmp_path / "bounded-tuned-T.json")
    assert payload["seed"] == 11
    cfg_bad = tmp_path / "bad.cfg"
    cfg_bad.write_text(CONFIG + "\n[tolerances]\nsteady_tol = 5\n")
    assert run(["bounded", str(cfg_bad), "-o", str(tmp_path)]) == 1
    cfg_unknown = tmp_path / "unk.cfg"
    cfg_unknown.write_text(CONFIG + "\n[run]\nbogus = 1\n")
    assert run(["bounded", str(cfg_unknown), "-o", str(tmp_path)]) == 1
