"""Experiment drivers at reduced scale, and the command-line front end."""

import json

import numpy as np
import pytest

from socicnn.cli import main
from socicnn.experiments import (
    Exp1Config,
    Exp2Config,
    Exp3Config,
    Exp4Config,
    METHOD_ORDER,
    run_exp1,
    run_exp2,
    run_exp3,
    run_exp4,
)


def rows_without_time(table):
    """Row tuples with wall-clock columns removed, for determinism checks."""
    keep = [i for i, c in enumerate(table.columns) if not c.endswith("_ms")]
    return [tuple(row[i] for i in keep) for row in table.rows]


SMALL1 = Exp1Config(samples=25, input_dim=6, widths=(12, 10), quad_dims=(4,), cone_dims=(4,))
SMALL2 = Exp2Config(points=12, trials=60)
SMALL3 = Exp3Config(directions=120, branches=300, probes=300)
SMALL4 = Exp4Config(queries=4)


@pytest.fixture(scope="module")
def exp1_small():
    return run_exp1(SMALL1)


class TestExp1:
    def test_structure(self, exp1_small):
        assert exp1_small.name == "exp1"
        table = exp1_small.tables[0]
        assert table.name == "gradient_check"
        assert table.columns[:3] == ("trials", "retained_rate", "grad_l2_err")
        assert len(table.rows) == 1

    def test_checks_pass_at_reduced_scale(self, exp1_small):
        for check in exp1_small.checks:
            assert check.passed, f"{check.name}: {check.detail}"
        assert exp1_small.all_passed()

    def test_deterministic_modulo_timing(self, exp1_small):
        again = run_exp1(SMALL1)
        assert rows_without_time(exp1_small.tables[0]) == rows_without_time(again.tables[0])

    def test_zero_samples_degrades_gracefully(self):
        cfg = Exp1Config(samples=0, input_dim=4, widths=(6,), quad_dims=(), cone_dims=())
        out = run_exp1(cfg)
        assert len(out.tables[0].rows) == 0
        assert any(c.name == "exp1-runtime" for c in out.checks)


@pytest.fixture(scope="module")
def exp2_small():
    return run_exp2(SMALL2)


class TestExp2:
    def test_structure(self, exp2_small):
        names = [t.name for t in exp2_small.tables]
        assert names == ["derivative_check", "quadratic_model"]
        quad = exp2_small.tables[1]
        assert [row[0] for row in quad.rows] == [1e-4, 3e-4, 1e-3]

    def test_checks_pass_at_reduced_scale(self, exp2_small):
        for check in exp2_small.checks:
            assert check.passed, f"{check.name}: {check.detail}"

    def test_residual_grows_with_radius(self, exp2_small):
        resid = [row[2] for row in exp2_small.tables[1].rows]
        assert resid[0] < resid[1] < resid[2]


@pytest.fixture(scope="module")
def exp3_small():
    return run_exp3(SMALL3)


class TestExp3:
    def test_structure(self, exp3_small):
        table = exp3_small.tables[0]
        assert table.name == "degenerate_geometry"
        assert len(table.rows) == 1
        cols = dict(zip(table.columns, table.rows[0]))
        assert cols["directions"] == 120
        assert cols["canonical_gap_frac"] == 1.0
        assert cols["max_violation"] <= 1e-9
        assert cols["min_norm_gap"] > 0
        assert cols["min_support_margin"] > 0

    def test_checks_pass_at_reduced_scale(self, exp3_small):
        for check in exp3_small.checks:
            assert check.passed, f"{check.name}: {check.detail}"

    def test_deterministic_modulo_timing(self, exp3_small):
        again = run_exp3(SMALL3)
        assert rows_without_time(exp3_small.tables[0]) == rows_without_time(again.tables[0])


@pytest.fixture(scope="module")
def exp4_small():
    return run_exp4(SMALL4)


class TestExp4:
    def test_structure(self, exp4_small):
        names = [t.name for t in exp4_small.tables]
        assert names == ["methods", "queries", "diagnostics"]
        methods = [row[0] for row in exp4_small.tables[0].rows]
        assert methods == list(METHOD_ORDER)
        assert len(exp4_small.tables[1].rows) == 4 * SMALL4.queries

    def test_checks_pass_at_reduced_scale(self, exp4_small):
        for check in exp4_small.checks:
            assert check.passed, f"{check.name}: {check.detail}"

    def test_newton_beats_gd(self, exp4_small):
        by_method = {row[0]: row for row in exp4_small.tables[0].rows}
        cols = exp4_small.tables[0].columns
        iters = cols.index("iters")
        assert by_method["whitebox-newton"][iters] < 0.2 * by_method["whitebox-gd"][iters]


class TestCli:
    def test_model_gen_is_deterministic(self, tmp_path):
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        args = ["--seed", "5", "--input-dim", "4", "--width", "6", "--depth", "2",
                "--quad-dims", "2", "--cone-dims", "2"]
        assert main(["model", "gen", "--out", str(p1)] + args) == 0
        assert main(["model", "gen", "--out", str(p2)] + args) == 0
        assert p1.read_bytes() == p2.read_bytes()

    def test_model_info_round_trip(self, tmp_path, capsys):
        path = tmp_path / "deg.json"
        assert main(["model", "gen", "--out", str(path), "--preset", "degenerate-2d"]) == 0
        assert main(["model", "info", str(path)]) == 0
        text = capsys.readouterr().out
        assert "validation: ok" in text
        assert "input_dim" in text

    def test_model_info_rejects_corrupted_file(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{broken")
        assert main(["model", "info", str(path)]) == 2
        assert capsys.readouterr().err != ""

    def test_exp1_check_passes(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "samples": 10, "input_dim": 5, "widths": [8, 6],
            "quad_dims": [3], "cone_dims": [3],
        }))
        code = main(["exp1", "--config", str(cfg), "--check"])
        text = capsys.readouterr().out
        assert code == 0
        assert "[PASS] exp1-grad-exact" in text
        assert "[FAIL]" not in text

    def test_check_failure_sets_exit_code(self, tmp_path, capsys):
        """A deliberately coarse difference step pushes the oracle mismatch
        over its bound, which must surface as a failed check and exit 3."""
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "samples": 10, "input_dim": 5, "widths": [8, 6],
            "quad_dims": [3], "cone_dims": [3], "fd_step": 10.0,
        }))
        code = main(["exp1", "--config", str(cfg), "--check"])
        text = capsys.readouterr().out
        assert code == 3
        assert "[FAIL]" in text

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sample": 10}))
        assert main(["exp1", "--config", str(cfg)]) == 2
        assert "sample" in capsys.readouterr().err

    def test_missing_config_file_rejected(self, capsys):
        assert main(["exp1", "--config", "/nonexistent/cfg.json"]) == 2
        assert capsys.readouterr().err != ""

    def test_csv_output_round_trips(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "directions": 40, "branches": 100, "probes": 100,
        }))
        out_dir = tmp_path / "results"
        assert main(["exp3", "--config", str(cfg), "--out", str(out_dir)]) == 0
        capsys.readouterr()
        csv_path = out_dir / "exp3_degenerate_geometry.csv"
        lines = csv_path.read_text().splitlines()
        header = lines[0].split(",")
        row = lines[1].split(",")
        assert header[0] == "directions"
        assert float(row[header.index("canonical_gap_frac")]) == 1.0
        parsed = float(row[header.index("fd_mean_err")])
        assert np.isfinite(parsed) and parsed < 5e-8

    def test_json_output_well_formed(self, tmp_path, capsys):
        out_dir = tmp_path / "results"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "samples": 5, "input_dim": 4, "widths": [6], "quad_dims": [2], "cone_dims": [2],
        }))
        assert main(["exp1", "--config", str(cfg), "--out", str(out_dir),
                     "--format", "json"]) == 0
        capsys.readouterr()
        obj = json.loads((out_dir / "exp1_gradient_check.json").read_text())
        assert obj["columns"][0] == "trials"
        assert len(obj["rows"]) == 1

    def test_count_flag_overrides_config(self, capsys):
        assert main(["exp1", "--samples", "3", "--seed", "1"]) == 0
        text = capsys.readouterr().out
        assert "[gradient_check]" in text

    def test_nested_solver_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "queries": 2,
            "solver": {"beta": 10.0, "grad_tol": 1e-3},
        }))
        assert main(["exp4", "--config", str(cfg)]) == 0
        assert "[methods]" in capsys.readouterr().out

    def test_no_command_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exit_info:
            main([])
        assert exit_info.value.code == 2
