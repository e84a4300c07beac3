"""Tests for the acceptance harness."""

import json

import pandas as pd
import pytest

from qcmediator.acceptance import CRITERIA, Criterion, RunSpec, parse_overrides, run_acceptance
from qcmediator.cli import accept
from qcmediator.errors import ConfigValidationError
from qcmediator.metrics import RunMetrics
from qcmediator.scenarios import OutputFormat

IDENTITY = Criterion(90, "Identity interaction", (RunSpec("koopman-identity"),), budget_s=10)


class TestParseOverrides:
    def test_valid(self):
        assert parse_overrides(["probability=1e-10", "entropy_min = 0.5"]) == {
            "probability": 1e-10,
            "entropy_min": 0.5,
        }

    @pytest.mark.parametrize("item", ["probability", "=1", "vibes=1", "probability=small"])
    def test_invalid(self, item):
        with pytest.raises(ConfigValidationError):
            parse_overrides([item])


class TestCriteria:
    def test_numbered_one_to_eight(self):
        assert [c.number for c in CRITERIA] == list(range(1, 9))

    def test_every_run_uses_a_shipped_preset(self):
        from qcmediator.scenarios import list_presets

        shipped = set(list_presets())
        assert all(spec.preset in shipped for c in CRITERIA for spec in c.runs)


class TestRunAcceptance:
    def test_passing_criterion(self):
        metrics = RunMetrics()
        report = run_acceptance(20190513, criteria=[IDENTITY], metrics=metrics)
        assert report.passed
        assert "criterion_90" in metrics.to_dict()["checks"]
        assert "[PASS] 90. Identity interaction" in report.matrix()

    def test_override_breaks_check(self):
        report = run_acceptance(20190513, {"koopman_negativity": -1.0}, criteria=[IDENTITY])
        assert not report.passed
        failed = [c.name for c in report.criteria[0].checks if not c.passed]
        assert "reduced_negativity" in failed
        assert report.to_dict()["tolerances"]["koopman_negativity"] == -1.0
        assert "Overall: FAIL" in report.matrix()

    def test_missing_check_fails(self):
        criterion = Criterion(91, "Missing", (RunSpec("koopman-identity", only=("no_such_check",)),), budget_s=10)
        report = run_acceptance(20190513, criteria=[criterion])
        checks = report.criteria[0].checks
        assert [c.name for c in checks] == ["no_such_check"]
        assert not checks[0].passed

    def test_repeat_check(self):
        criterion = Criterion(
            92, "Repeat", (RunSpec("koopman-identity"),), budget_s=10, repeat_check="max_final_negativity",
        )
        report = run_acceptance(20190513, criteria=[criterion])
        assert report.criteria[0].checks[-1].name == "max_final_negativity_reproducible"
        assert report.passed

    def test_overrides_reach_config(self):
        criterion = Criterion(
            93, "Trials", (RunSpec("koopman-identity", {"params": {"trials": 2}}),), budget_s=10,
        )
        report = run_acceptance(20190513, criteria=[criterion])
        assert len(report.criteria[0].config_hashes) == 1
        assert report.passed

    def test_parallel_keeps_order(self):
        second = Criterion(94, "Second", (RunSpec("koopman-identity"),), budget_s=10)
        report = run_acceptance(20190513, criteria=[IDENTITY, second], jobs=2)
        assert [c.number for c in report.criteria] == [90, 94]
        assert report.to_dict()["criteria"][0]["criterion"] == 90


class TestCriterionSeven:
    def test_pins_quarter_turn_values(self):
        (spec,) = next(c for c in CRITERIA if c.number == 7).runs
        assert spec.preset == "general"
        assert spec.overrides["params"]["expected_conditional"] == 0.5
        assert spec.overrides["params"]["expect_maximal_mn_entanglement"] is True
        assert spec.overrides["params"]["require_monotone"] is True

    def test_preset_itself_is_unpinned(self):
        from qcmediator.scenarios import load_config

        params = load_config("general").params
        assert params.expected_conditional is None
        assert not params.expect_maximal_mn_entanglement
        assert params.conditional_reference


class TestAcceptArtifacts:
    def test_report_bytes_repeat_with_same_seed(self, tmp_path):
        for name in ("a", "b"):
            accept(20190513, out_dir=tmp_path / name, criteria=[IDENTITY])
        first = (tmp_path / "a" / "report.json").read_bytes()
        second = (tmp_path / "b" / "report.json").read_bytes()
        assert first == second
        assert json.loads(first)["passed"] is True

    def test_seed_changes_report(self, tmp_path):
        accept(20190513, out_dir=tmp_path / "a", criteria=[IDENTITY])
        accept(7, out_dir=tmp_path / "b", criteria=[IDENTITY])
        a = json.loads((tmp_path / "a" / "report.json").read_text())
        b = json.loads((tmp_path / "b" / "report.json").read_text())
        assert a["criteria"][0]["config_hashes"] != b["criteria"][0]["config_hashes"]

    def test_json_by_default(self, tmp_path):
        accept(20190513, out_dir=tmp_path, criteria=[IDENTITY])
        assert (tmp_path / "metrics.json").exists()
        assert not (tmp_path / "checks.csv").exists()

    def test_csv_matrix(self, tmp_path):
        report = accept(20190513, out_dir=tmp_path, criteria=[IDENTITY], fmt=OutputFormat.CSV)
        frame = pd.read_csv(tmp_path / "checks.csv")
        assert list(frame.columns[:3]) == ["criterion", "title", "name"]
        assert set(frame["criterion"]) == {90}
        assert len(frame) == len(report.criteria[0].checks)
        assert frame["passed"].all()
        assert (tmp_path / "report.json").exists()

    def test_format_flag_parses(self):
        from qcmediator.cli import build_parser

        args = build_parser().parse_args(["accept", "--format", "csv"])
        assert args.format == "csv"
        assert build_parser().parse_args(["accept"]).format == "json"
