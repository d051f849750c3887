import json
from pathlib import Path

import pytest

from transitopt.cli import main

from _factories import full_pattern_plan_doc, random_toy_doc, scenario_doc
from transitopt import load_scenario


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_doc()))
    return path


def write_doc(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestValidate:
    def test_clean_exit_zero(self, scenario_file, capsys):
        assert main(["validate", "--scenario", str(scenario_file)]) == 0
        assert capsys.readouterr().out == ""

    def test_descending_menu_exit_one(self, tmp_path, capsys):
        path = write_doc(tmp_path, scenario_doc(menu=(7.0, 5.0)))
        assert main(["validate", "--scenario", str(path)]) == 1
        assert "ascending" in capsys.readouterr().out

    def test_missing_file_exit_two(self, tmp_path):
        assert main(["validate", "--scenario", str(tmp_path / "nope.json")]) == 2

    def test_bad_json_exit_two(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["validate", "--scenario", str(path)]) == 2


class TestSolve:
    def test_artifacts_and_exit(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["solve", "--scenario", str(scenario_file), "--out", str(out)]) == 0
        for name in ("plan.json", "metrics.json", "metrics.csv", "model_stats.json",
                     "model.lp", "patterns.txt", "manifest.json"):
            assert (out / name).is_file(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "solve"
        assert manifest["solver_status"] == "optimal"
        assert set(manifest["artifacts"]) >= {"plan.json", "metrics.json", "model.lp"}
        assert "objective" in capsys.readouterr().out

    def test_infeasible_exit_three(self, tmp_path):
        path = write_doc(tmp_path, scenario_doc(fleet_cap=0.5, vehicle_hours_cap=0.5))
        out = tmp_path / "run"
        assert main(["solve", "--scenario", str(path), "--out", str(out)]) == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["solver_status"] == "infeasible"

    def test_determinism_byte_identical(self, scenario_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "--scenario", str(scenario_file), "--out", str(out1)]) == 0
        assert main(["solve", "--scenario", str(scenario_file), "--out", str(out2)]) == 0
        for name in ("model.lp", "plan.json", "metrics.json", "model_stats.json",
                     "patterns.txt"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_no_transfers_override(self, scenario_file, tmp_path):
        out = tmp_path / "run"
        assert main(["solve", "--scenario", str(scenario_file), "--out", str(out),
                     "--no-transfers"]) == 0
        stats = json.loads((out / "model_stats.json").read_text())
        assert stats["variables"]["by_family"]["fx"] == 0

    def test_invalid_scenario_exit_one(self, tmp_path):
        path = write_doc(tmp_path, scenario_doc(menu=(7.0, 5.0)))
        assert main(["solve", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 1


class TestEvaluate:
    def test_metrics_written(self, scenario_file, tmp_path, capsys):
        scenario = load_scenario(scenario_file)
        plan_path = write_doc(tmp_path, full_pattern_plan_doc(scenario), "plan.json")
        out = tmp_path / "run"
        assert main(["evaluate", "--scenario", str(scenario_file),
                     "--plan", str(plan_path), "--out", str(out)]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["riders_total"] == 60.0
        assert (out / "metrics.csv").read_text().startswith("metric,value")

    def test_unroutable_exit_three(self, tmp_path, capsys):
        doc = scenario_doc(n_patterns=1, transfers=False,
                           demand=(((0, 0, 2), 10.0),))
        path = write_doc(tmp_path, doc)
        scenario = load_scenario(path)
        plan = full_pattern_plan_doc(scenario)
        # short-turn the only pattern so stop C is never served
        plan["routes"][0]["periods"][0]["patterns"][0]["stops"] = [0, 1, 4, 5]
        plan_path = write_doc(tmp_path, plan, "plan.json")
        out = tmp_path / "run"
        assert main(["evaluate", "--scenario", str(path),
                     "--plan", str(plan_path), "--out", str(out)]) == 3
        err = capsys.readouterr().err
        assert "origin 0 -> destination 2" in err

    def test_missing_plan_exit_two(self, scenario_file, tmp_path):
        assert main(["evaluate", "--scenario", str(scenario_file),
                     "--plan", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_plan_not_on_menu_exit_one(self, scenario_file, tmp_path):
        scenario = load_scenario(scenario_file)
        plan = full_pattern_plan_doc(scenario)
        plan["routes"][0]["periods"][0]["patterns"][0]["headway"] = 6.0
        plan_path = write_doc(tmp_path, plan, "plan.json")
        assert main(["evaluate", "--scenario", str(scenario_file),
                     "--plan", str(plan_path), "--out", str(tmp_path / "o")]) == 1


class TestCompare:
    def test_optimizer_never_loses(self, scenario_file, tmp_path, capsys):
        scenario = load_scenario(scenario_file)
        plan_path = write_doc(tmp_path, full_pattern_plan_doc(scenario), "base.json")
        out = tmp_path / "run"
        assert main(["compare", "--scenario", str(scenario_file),
                     "--baseline", str(plan_path), "--out", str(out)]) == 0
        comparison = json.loads((out / "comparison.json").read_text())
        assert comparison["percent_change"]["objective"] <= 1e-9
        assert comparison["baseline"]["objective"] >= comparison["optimized"]["objective"] - 1e-9

    def test_self_comparison_is_zero(self, scenario_file, tmp_path):
        out1 = tmp_path / "first"
        assert main(["solve", "--scenario", str(scenario_file), "--out", str(out1)]) == 0
        out2 = tmp_path / "second"
        assert main(["compare", "--scenario", str(scenario_file),
                     "--baseline", str(out1 / "plan.json"), "--out", str(out2)]) == 0
        comparison = json.loads((out2 / "comparison.json").read_text())
        assert comparison["percent_change"]["objective"] == pytest.approx(0.0, abs=1e-9)


class TestOracleCommand:
    def test_match_exit_zero(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["oracle", "--scenario", str(scenario_file), "--out", str(out)]) == 0
        report = json.loads((out / "oracle_report.json").read_text())
        assert report["verdict"] == "match"
        assert "verdict match" in capsys.readouterr().out

    def test_oversized_exit_one(self, tmp_path):
        doc = scenario_doc(menu=(4.0, 5.0, 6.0))
        path = write_doc(tmp_path, doc)
        assert main(["oracle", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 1


class TestExport:
    def test_artifacts(self, scenario_file, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["export", "--scenario", str(scenario_file), "--out", str(out)]) == 0
        text = (out / "model.lp").read_text()
        assert text.startswith("\\ transitopt\nMinimize")
        assert text.rstrip().endswith("End")
        assert (out / "model_stats.json").is_file()
        assert "exported" in capsys.readouterr().out


class TestRendering:
    def test_patterns_file_shape(self, scenario_file, tmp_path):
        out = tmp_path / "run"
        main(["solve", "--scenario", str(scenario_file), "--out", str(out)])
        text = (out / "patterns.txt").read_text()
        assert "route 0 period 0" in text
        assert "pattern 0" in text
        assert "A" in text and "C" in text
