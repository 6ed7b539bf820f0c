"""End-to-end tests for the command-line pipeline."""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from cnot import SolverParams, minimize_quantile
from cnot.cli import load_scenario, main


def _write_scenario(path, **overrides):
    doc = {
        "interval": {"lo": 0.0, "hi": 1.0},
        "grid_n": 48,
        "quantile_m": 192,
        "mu": {"kind": "gaussian_truncated", "mean": 0.5, "sigma": 0.15},
        "cost": {"kind": "quadratic"},
        "congestion": {"kind": "entropy", "convention": "shifted"},
        "kernel": {"kind": "quadratic_distance", "kappa": 2.0},
        "potential": {"kind": "none"},
        "support_mode": "free",
        "solver": {"grad_tol": 1e-8},
        "seed": 0,
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc, indent=2))
    return path


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.strip()


def test_missing_command_is_a_usage_error(capsys):
    assert main([]) == 1
    assert "command is required" in capsys.readouterr().err


def test_unknown_scenario_key_reports_pointer(tmp_path, capsys):
    scn = _write_scenario(tmp_path / "s.json", extra=1)
    assert main(["solve", "--scenario", str(scn), "--out", str(tmp_path / "out")]) == 1
    err = capsys.readouterr().err
    assert "/extra" in err and "unknown field" in err


def test_bad_mu_kind_reports_pointer(tmp_path, capsys):
    scn = _write_scenario(tmp_path / "s.json", mu={"kind": "lognormal"})
    assert main(["solve", "--scenario", str(scn), "--out", str(tmp_path / "out")]) == 1
    assert "/mu/kind" in capsys.readouterr().err


def test_missing_scenario_file(tmp_path, capsys):
    assert main(["solve", "--scenario", str(tmp_path / "nope.json")]) == 1
    assert "not found" in capsys.readouterr().err


def test_invalid_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--scenario", str(bad)]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_solve_writes_artifacts(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    out = tmp_path / "out"
    assert main(["solve", "--scenario", str(scn), "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["converged"] is True
    assert diag["command"] == "solve"
    assert diag["residual_eq"] < 1e-2
    assert len(diag["scenario_hash"]) == 64
    eq_lines = (out / "equilibrium.csv").read_text().strip().splitlines()
    assert eq_lines[0] == "node,nu"
    assert len(eq_lines) == 49  # header + one row per grid cell
    q_lines = (out / "quantile.csv").read_text().strip().splitlines()
    assert q_lines[0] == "p,G"
    assert len(q_lines) == 193
    # the CLI result matches a direct library call
    scenario = load_scenario(str(scn))
    result = minimize_quantile(scenario, SolverParams(grad_tol=1e-8))
    assert diag["J"] == pytest.approx(result.J_value, abs=1e-12)


def test_solve_reruns_are_bit_identical(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--scenario", str(scn), "--out", str(out_a)]) == 0
    assert main(["solve", "--scenario", str(scn), "--out", str(out_b)]) == 0
    for name in ("equilibrium.csv", "quantile.csv", "diagnostics.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_solve_iteration_cap_exits_2(tmp_path, capsys):
    scn = _write_scenario(tmp_path / "s.json")
    out = tmp_path / "out"
    code = main(["solve", "--scenario", str(scn), "--out", str(out),
                 "--max-iters", "1", "--tol", "1e-14"])
    assert code == 2
    assert "did not converge" in capsys.readouterr().err
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["converged"] is False


def test_solve_support_override(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    out = tmp_path / "out"
    assert main(["solve", "--scenario", str(scn), "--out", str(out),
                 "--support", "fixed"]) == 0
    q = np.loadtxt(out / "quantile.csv", delimiter=",", skiprows=1)
    assert q[0, 1] == 0.0 and q[-1, 1] == 1.0


def test_verify_runs_requested_checks(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    out = tmp_path / "out"
    assert main(["verify", "--scenario", str(scn), "--out", str(out),
                 "--checks", "eq,purity,dc,deriv"]) == 0
    payload = json.loads((out / "verify.json").read_text())
    assert payload["density_source"] == "solved"
    assert set(payload["results"]) == {"eq", "purity", "dc", "deriv"}
    assert payload["results"]["eq"]["residual_eq"] < 1e-2
    assert payload["results"]["purity"]["pure"] is True
    assert payload["results"]["dc"]["max_violation"] == 0.0
    deriv = payload["results"]["deriv"]
    assert max(deriv["errors"]) < 1e-3 * (1.0 + abs(deriv["predicted"]))


def test_verify_unknown_check_name(tmp_path, capsys):
    scn = _write_scenario(tmp_path / "s.json")
    assert main(["verify", "--scenario", str(scn), "--out", str(tmp_path / "o"),
                 "--checks", "eq,bogus"]) == 1
    assert "/checks" in capsys.readouterr().err


def test_verify_second_order_check_inapplicable_with_potential(tmp_path):
    scn = _write_scenario(
        tmp_path / "s.json",
        potential={"kind": "poly", "coeffs": [0.0, 0.0, 1.0], "declared_convex": True},
    )
    out = tmp_path / "out"
    assert main(["verify", "--scenario", str(scn), "--out", str(out),
                 "--checks", "ma"]) == 0
    payload = json.loads((out / "verify.json").read_text())
    assert payload["results"]["ma"]["status"] == "inapplicable"
    assert "potential" in payload["results"]["ma"]["detail"]


def test_verify_accepts_density_file(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    solve_out = tmp_path / "solve"
    assert main(["solve", "--scenario", str(scn), "--out", str(solve_out)]) == 0
    out = tmp_path / "verify"
    assert main(["verify", "--scenario", str(scn), "--out", str(out),
                 "--density", str(solve_out / "equilibrium.csv"),
                 "--checks", "eq"]) == 0
    payload = json.loads((out / "verify.json").read_text())
    assert payload["density_source"] == "file"
    assert payload["results"]["eq"]["residual_eq"] < 1e-2


def test_jko_writes_trajectory(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    out = tmp_path / "out"
    assert main(["jko", "--scenario", str(scn), "--out", str(out),
                 "--tau", "0.5", "--steps", "3"]) == 0
    rows = (out / "trajectory.csv").read_text().strip().splitlines()
    assert rows[0] == "k,J,W2_step"
    assert len(rows) == 5  # header + initial point + 3 steps
    for k in range(4):
        assert (out / f"density_{k:04d}.csv").exists()
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["terminal_vs_direct_W2"] >= 0.0
    J = [float(line.split(",")[1]) for line in rows[1:]]
    assert all(b <= a + 1e-10 for a, b in zip(J, J[1:]))


def test_jko_init_file_requires_path(tmp_path, capsys):
    scn = _write_scenario(tmp_path / "s.json")
    assert main(["jko", "--scenario", str(scn), "--out", str(tmp_path / "o"),
                 "--init", "file"]) == 1
    assert "--init-file" in capsys.readouterr().err


def test_welfare_writes_report_and_taxes(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    out = tmp_path / "out"
    assert main(["welfare", "--scenario", str(scn), "--out", str(out)]) == 0
    payload = json.loads((out / "welfare.json").read_text())
    assert payload["cost_of_anarchy"] >= 1.0
    assert payload["sc_optimum"] <= payload["sc_equilibrium"]
    taxes = (out / "taxes.csv").read_text().strip().splitlines()
    assert taxes[0] == "node,tax_paper,tax_marginal"
    assert len(taxes) == 49


def test_sweep_solves_each_value(tmp_path):
    scn = _write_scenario(tmp_path / "s.json")
    out = tmp_path / "out"
    assert main(["sweep", "--scenario", str(scn), "--out", str(out),
                 "--param", "kernel.kappa", "--values", "0.5,2.0"]) == 0
    rows = (out / "summary.csv").read_text().strip().splitlines()
    assert len(rows) == 3
    assert rows[0].startswith("value,directory,exit_code")
    for i, value in enumerate(("0.5", "2")):
        run_dir = out / f"run_{i:03d}_kappa_{value}"
        assert (run_dir / "diagnostics.json").exists()
        assert (run_dir / "equilibrium.csv").exists()


def test_sweep_rejects_bad_values(tmp_path, capsys):
    scn = _write_scenario(tmp_path / "s.json")
    assert main(["sweep", "--scenario", str(scn), "--out", str(tmp_path / "o"),
                 "--param", "kernel.kappa", "--values", "1.0,abc"]) == 1
    assert "/values" in capsys.readouterr().err


def test_sweep_rejects_unknown_param_path(tmp_path, capsys):
    scn = _write_scenario(tmp_path / "s.json")
    assert main(["sweep", "--scenario", str(scn), "--out", str(tmp_path / "o"),
                 "--param", "laser.power", "--values", "1.0"]) == 1
    assert "/param" in capsys.readouterr().err


def test_thread_count_env(tmp_path, monkeypatch, capsys):
    scn = _write_scenario(tmp_path / "s.json")
    monkeypatch.setenv("CNOT_THREADS", "2")
    assert main(["sweep", "--scenario", str(scn), "--out", str(tmp_path / "a"),
                 "--param", "kernel.kappa", "--values", "1.0"]) == 0
    monkeypatch.setenv("CNOT_THREADS", "zero")
    assert main(["sweep", "--scenario", str(scn), "--out", str(tmp_path / "b"),
                 "--param", "kernel.kappa", "--values", "1.0"]) == 1
    assert "CNOT_THREADS" in capsys.readouterr().err


def test_table_density_source(tmp_path):
    nodes = (np.arange(48) + 0.5) / 48.0
    values = 1.0 + 0.5 * np.cos(2.0 * np.pi * nodes)
    table = tmp_path / "mu.csv"
    table.write_text("node,value\n" + "\n".join(f"{x},{v}" for x, v in zip(nodes, values)))
    scn = _write_scenario(tmp_path / "s.json", mu={"kind": "table", "path": "mu.csv"})
    out = tmp_path / "out"
    assert main(["solve", "--scenario", str(scn), "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["converged"] is True


def test_console_script_smoke():
    exe = shutil.which("cnot")
    assert exe is not None, "console script should be installed"
    proc = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    module = subprocess.run(
        [sys.executable, "-m", "cnot.cli"], capture_output=True, text=True
    )
    assert module.returncode == 1
    assert "command is required" in module.stderr
