"""Config loading, run/study artifacts, exit codes and determinism."""

import math
from pathlib import Path

import numpy as np
import pytest

from fracnoether.cli import (
    BUILTIN_EXAMPLES,
    ConfigError,
    load_config,
    main,
    parse_config,
    run,
    study,
)

GOOD_CONFIG = """\
# comments are stripped
alpha = 0.75
t0 = 0
t1 = 1
n = 1
m = 1
lagrangian = u1^2/2   # trailing comment
phi1 = u1
q1_start = 0
q1_end = 1
grid_n = 32

[symmetry momentum]
xi1 = 1
"""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_good_config():
    cfg = parse_config(GOOD_CONFIG, name="demo")
    assert cfg.problem.alpha == 0.75
    assert cfg.problem.n == 1 and cfg.problem.m == 1
    assert cfg.grid_n == 32
    assert list(cfg.symmetries) == ["momentum"]


def test_builtin_examples_load():
    for name in BUILTIN_EXAMPLES:
        cfg = load_config(name)
        assert cfg.name == name
        assert cfg.grid_n >= 2


def test_builtin_momentum_matches_expected_shape():
    cfg = load_config("example-momentum")
    assert cfg.problem.alpha == 0.75
    assert cfg.problem.n == 1 and cfg.problem.m == 1
    assert "momentum" in cfg.symmetries


def test_missing_alpha_names_key():
    text = GOOD_CONFIG.replace("alpha = 0.75\n", "")
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(text)


def test_alpha_out_of_range():
    text = GOOD_CONFIG.replace("alpha = 0.75", "alpha = 1.5")
    with pytest.raises(ConfigError, match=r"\(0, 1\]"):
        parse_config(text)


def test_unknown_key_reports_line():
    text = GOOD_CONFIG + "bogus = 1\n"
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(text)


def test_bad_expression_reports_line():
    text = GOOD_CONFIG.replace("phi1 = u1", "phi1 = u1 +")
    with pytest.raises(ConfigError, match="line 8"):
        parse_config(text)


def test_undeclared_variable_in_expression():
    text = GOOD_CONFIG.replace("lagrangian = u1^2/2", "lagrangian = u2^2/2")
    with pytest.raises(ConfigError, match="u2"):
        parse_config(text)


def test_free_end_and_solver_keys():
    text = GOOD_CONFIG.replace("q1_end = 1", "q1_end = free").replace(
        "grid_n = 32", "grid_n = 32\nmax_iterations = 10\nresidual_tolerance = 1e-8"
    )
    cfg = parse_config(text)
    assert cfg.problem.q_end == (None,)
    assert cfg.solver.max_iterations == 10
    assert cfg.solver.residual_tolerance == 1e-8


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("alpha = 0.5\n" + GOOD_CONFIG)


def test_nonexistent_path_is_config_error():
    with pytest.raises(ConfigError):
        load_config("/no/such/file.cfg")


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _read_csv(path: Path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return header, data


def test_run_writes_artifacts_and_exits_zero(tmp_path):
    cfg = load_config("example-momentum")
    cfg.grid_n = 48
    status = run(cfg, out_dir=str(tmp_path))
    assert status == 0
    for name in ("trajectory.csv", "residuals.csv", "report.txt"):
        assert (tmp_path / name).is_file()
    header, data = _read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "q1", "u1", "p1", "caputo_q1"]
    assert data.shape == (49, 5)
    report = (tmp_path / "report.txt").read_text()
    assert "converged: true" in report
    assert "symmetry_momentum_conservation_pass: true" in report


def test_report_norms_recomputable_from_residual_csv(tmp_path):
    cfg = load_config("example-momentum")
    cfg.grid_n = 48
    run(cfg, out_dir=str(tmp_path))
    header, data = _read_csv(tmp_path / "residuals.csv")
    report = dict(
        line.split(": ", 1)
        for line in (tmp_path / "report.txt").read_text().strip().split("\n")
    )
    for label, key in (
        ("adjoint_1", "adjoint_residual_norm"),
        ("state_1", "state_residual_norm"),
        ("stationarity_1", "stationarity_residual_norm"),
    ):
        col = data[:, header.index(label)]
        recomputed = float(np.abs(col[1:-1]).max())
        assert recomputed == float(report[key])


def test_run_deterministic_outputs(tmp_path):
    cfg1 = load_config("example-momentum")
    cfg1.grid_n = 48
    run(cfg1, out_dir=str(tmp_path / "a"))
    cfg2 = load_config("example-momentum")
    cfg2.grid_n = 48
    run(cfg2, out_dir=str(tmp_path / "b"))
    for name in ("trajectory.csv", "residuals.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_numeric_failure_still_writes_report(tmp_path):
    text = GOOD_CONFIG.replace(
        "grid_n = 32", "grid_n = 32\nmax_iterations = 1\nresidual_tolerance = 1e-15"
    )
    cfg = parse_config(text, name="stubborn")
    status = run(cfg, out_dir=str(tmp_path))
    assert status == 2
    report = (tmp_path / "report.txt").read_text()
    assert "converged: false" in report


def test_run_diagnostics_off(tmp_path):
    text = GOOD_CONFIG.replace("grid_n = 32", "grid_n = 32\ndiagnostics = off")
    cfg = parse_config(text, name="quiet")
    run(cfg, out_dir=str(tmp_path))
    report = (tmp_path / "report.txt").read_text()
    assert "diagnostic_" not in report


def test_run_failed_verification_exits_two(tmp_path):
    # the fractional time-translation pair does not satisfy the bracket
    # condition along extremals, so a tight tolerance must fail the run
    text = GOOD_CONFIG.replace(
        "[symmetry momentum]\nxi1 = 1", "[symmetry energy]\ntau = 1"
    )
    cfg = parse_config(text, name="energy-frac")
    status = run(cfg, out_dir=str(tmp_path))
    assert status == 2
    report = (tmp_path / "report.txt").read_text()
    assert "converged: true" in report
    assert "symmetry_energy_conservation_pass: false" in report


def test_cli_main_run_and_examples(tmp_path, capsys):
    assert main(["examples", "list"]) == 0
    out = capsys.readouterr().out
    assert "example-momentum" in out
    assert main(["examples", "show", "example-energy"]) == 0
    out = capsys.readouterr().out
    assert "tau = 1" in out
    assert main(["examples", "show", "nope"]) == 1
    capsys.readouterr()
    code = main(["run", "example-momentum", "--grid-n", "32",
                 "--out", str(tmp_path / "r")])
    assert code == 0
    assert (tmp_path / "r" / "report.txt").is_file()


def test_cli_main_nonexistent_config(tmp_path, capsys):
    code = main(["run", str(tmp_path / "missing.cfg")])
    assert code == 1
    assert not (tmp_path / "missing.cfg").exists()
    err = capsys.readouterr().err
    assert "error" in err


def test_cli_main_config_file(tmp_path):
    path = tmp_path / "problem.cfg"
    path.write_text(GOOD_CONFIG)
    code = main(["run", str(path), "--out", str(tmp_path / "out")])
    assert code == 0
    report = (tmp_path / "out" / "report.txt").read_text()
    assert "problem: problem" in report


# ---------------------------------------------------------------------------
# study
# ---------------------------------------------------------------------------

def test_study_csv_columns(tmp_path, capsys):
    code = main(["study", "example-momentum", "--grid-n", "16,32",
                 "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "study.csv").read_text().strip().split("\n")
    assert lines[0] == "N,status,newton_residual,bracket_momentum"
    assert len(lines) == 3
    assert lines[1].startswith("16,ok,")
    assert lines[2].startswith("32,ok,")
    table = capsys.readouterr().out
    assert "newton_residual" in table


def test_study_single_n(tmp_path):
    cfg = load_config("example-momentum")
    assert study(cfg, [16], out_dir=str(tmp_path)) == 0
    lines = (tmp_path / "study.csv").read_text().strip().split("\n")
    assert len(lines) == 2


def test_study_failed_row_marked(tmp_path):
    text = GOOD_CONFIG.replace(
        "grid_n = 32", "grid_n = 32\nmax_iterations = 1\nresidual_tolerance = 1e-15"
    )
    cfg = parse_config(text, name="stubborn")
    code = study(cfg, [16, 32], out_dir=str(tmp_path))
    assert code == 2
    lines = (tmp_path / "study.csv").read_text().strip().split("\n")
    assert all("FAILED" in line for line in lines[1:])
    assert len(lines) == 3
