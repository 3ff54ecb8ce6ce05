import json
import subprocess
import sys

import pytest

from parabnf.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_quantize_check(tmp_path, capsys):
    assert run(tmp_path, "quantize-check", "--modes", "16") == EXIT_OK
    data = json.loads((tmp_path / "quantize_check.json").read_text())
    assert data["multiplier_max_error"] <= 1e-13 and data["schema"] == 1


def test_compose_check(tmp_path):
    assert run(tmp_path, "compose-check", "--modes", "32") == EXIT_OK
    rows = json.loads((tmp_path / "compose_check.json").read_text())["rows"]
    assert all(r["slope"] <= r["bound"] for r in rows)


def test_flow(tmp_path):
    assert run(tmp_path, "flow", "--modes", "8", "--r", "0.02") == EXIT_OK
    data = json.loads((tmp_path / "flow.json").read_text())
    assert data["round_trip"] <= 1e-8


def test_simulate_and_report(tmp_path):
    assert run(tmp_path, "simulate", "--modes", "8", "--T", "0.2", "--dt", "0.01") == EXIT_OK
    lines = (tmp_path / "simulate.csv").read_text().splitlines()
    assert lines[0] == "t,h_s_norm,energy,step_count" and len(lines) == 22
    assert run(tmp_path, "report") == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert "simulate" in rep["sections"]


def test_bnf(tmp_path):
    assert run(tmp_path, "bnf", "--modes", "16", "--set", "K=6") == EXIT_OK
    data = json.loads((tmp_path / "bnf.json").read_text())
    assert data["back_substitution"] <= 1e-12
    rows = json.loads((tmp_path / "bnf_tensors.json").read_text())
    assert rows and set(rows[0]) == {"degree", "tuple", "divisor", "coefficient_re", "coefficient_im"}


def test_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("model = linear\nmodes = 8\nT = 0.1\ndt = 0.05\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK


@pytest.mark.parametrize("args", [["simulate", "--dt", "-1"], ["simulate", "--set", "bogus=1"],
                                  ["simulate", "--set", "nokey"], ["nope"], ["bnf", "--set", "model=bo"],
                                  ["report", "--set", "out=/nonexistent/dir"], ["egorov-demo", "--r", "0.5"],
                                  ["simulate", "--config", "/nonexistent.cfg"]])
def test_validation_errors(tmp_path, args):
    if "out=/nonexistent/dir" in args:
        assert main(args) == EXIT_VALIDATION
    else:
        assert run(tmp_path, *args) == EXIT_VALIDATION


def test_numerical_failure(tmp_path):
    # a large state blows up the quasi-linear flow at this step size
    assert run(tmp_path, "simulate", "--modes", "8", "--r", "50", "--T", "5", "--dt", "0.05") == EXIT_NUMERICAL


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "parabnf", "quantize-check", "--modes", "8", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
