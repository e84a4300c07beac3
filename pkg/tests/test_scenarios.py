"""Tests for run configurations, presets and scenario runners."""

import json
import math

import pytest

from qcmediator.errors import ConfigValidationError
from qcmediator.scenarios import (
    DEFAULT_TOLERANCES,
    PRESET_VERSION,
    CheckResult,
    GeneralRun,
    KoopmanRun,
    build_report,
    check,
    config_hash,
    deep_merge,
    execute,
    list_presets,
    load_config,
    load_preset,
    validate_config,
    with_param,
    _moment_gap,
)

SMALL_PARTICLES = {
    "kind": "particles",
    "params": {
        "q_axis": {"n_points": 65},
        "qp_axis": {"n_points": 65},
        "x_axis": {"n_points": 97},
        "refined_points": 129,
        "mixture": False,
    },
}

SMALL_GENERAL = {
    "kind": "general",
    "params": {
        "c_axis": {"min": -16.0, "max": 16.0, "n_points": 128},
        "widths": [0.5, 1.0, 2.0],
        "require_monotone": True,
    },
    "tolerances": {"widest_negativity_min": 0.3},
}


def names(result):
    return {c.name for c in result.checks}


class TestPresets:
    def test_all_presets_validate(self):
        for name in list_presets():
            cfg = load_config(name)
            assert cfg.preset_version == PRESET_VERSION
            assert cfg.name == name

    def test_expected_presets_ship(self):
        assert {"koopman", "meanfield", "particles", "general", "brackets"} <= set(list_presets())

    def test_missing_preset(self):
        with pytest.raises(ConfigValidationError):
            load_preset("no-such-preset")

    def test_general_preset_hits_quarter_turn(self):
        cfg = load_config("general")
        assert cfg.params.t ** 2 / 2 == pytest.approx(math.pi / 4)


class TestValidation:
    def test_unknown_key_rejected(self):
        data = load_preset("koopman")
        data["params"]["trails"] = 3
        with pytest.raises(ConfigValidationError) as exc:
            validate_config(data)
        assert any(f.endswith("params.trails") for f in exc.value.fields)

    def test_field_path_reported(self):
        with pytest.raises(ConfigValidationError) as exc:
            load_config({"kind": "particles", "params": {"psi_c": {"width": -1.0}}})
        assert any(f.endswith("params.psi_c.width") for f in exc.value.fields)

    def test_unknown_kind(self):
        with pytest.raises(ConfigValidationError):
            validate_config({"kind": "quantum-gravity", "params": {}})

    def test_unknown_hamiltonian(self):
        with pytest.raises(ConfigValidationError):
            load_config({"kind": "meanfield", "params": {"hamiltonian": "quartic"}})

    def test_unknown_tolerance(self):
        with pytest.raises(ConfigValidationError):
            load_config({"kind": "koopman", "tolerances": {"vibes": 1.0}})

    def test_axis_range(self):
        with pytest.raises(ConfigValidationError):
            load_config({"kind": "particles", "params": {"x_axis": {"min": 1.0, "max": -1.0}}})

    def test_file_merges_over_preset(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"preset": "koopman-identity", "params": {"trials": 2}}))
        cfg = load_config(path)
        assert isinstance(cfg, KoopmanRun)
        assert cfg.params.trials == 2
        assert cfg.params.mode.value == "identity"

    def test_bad_json_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(ConfigValidationError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigValidationError):
            load_config(tmp_path / "absent.json")


class TestWithParam:
    def test_scalar(self):
        cfg = with_param(load_config("particles"), "g1", 2.5)
        assert cfg.params.g1 == 2.5

    def test_nested(self):
        cfg = with_param(load_config("particles"), "psi_c.width", 0.8)
        assert cfg.params.psi_c.width == 0.8

    def test_list_param_wraps_scalar(self):
        cfg = with_param(load_config("general"), "widths", 2.0)
        assert isinstance(cfg, GeneralRun)
        assert cfg.params.widths == [2.0]

    def test_unknown(self):
        with pytest.raises(ConfigValidationError):
            with_param(load_config("particles"), "g3", 1.0)

    def test_revalidates(self):
        with pytest.raises(ConfigValidationError):
            with_param(load_config("particles"), "psi_q.width", 0.0)


class TestChecks:
    @pytest.mark.parametrize("comparator, measured, passed", [
        ("<=", 1.0, True), ("<", 1.0, False), (">=", 1.0, True), (">", 2.0, True), ("==", 1.0, True),
    ])
    def test_comparators(self, comparator, measured, passed):
        assert check("c", measured, comparator, 1.0).passed is passed

    def test_to_dict(self):
        assert check("c", 0.5, "<=", 1.0).to_dict() == {
            "name": "c", "passed": True, "measured": 0.5, "tolerance": 1.0, "comparator": "<=",
        }

    def test_default_tolerances_are_positive(self):
        assert all(v > 0 for v in DEFAULT_TOLERANCES.values())

    def test_moment_gap_is_absolute(self):
        from qcmediator.ensemble import (
            ConfigurationGrid,
            ContinuousAxis,
            GaussianSpec,
            gaussian_ensemble,
            marginal_moments,
        )

        grid = ConfigurationGrid((ContinuousAxis("x", -10.0, 10.0, 201),))
        a = gaussian_ensemble(grid, GaussianSpec(0.0, 1.0))
        b = gaussian_ensemble(grid, GaussianSpec(0.0, 1.01))
        ma, mb = marginal_moments(a, "x"), marginal_moments(b, "x")
        gap = _moment_gap(a, b, "x")
        # fourth moment dominates: 3·(1.01⁴ − 1)
        assert gap == pytest.approx(abs(ma[4] - mb[4]))
        assert gap == pytest.approx(3 * (1.01 ** 4 - 1), rel=1e-6)


class TestDeepMerge:
    def test_nested(self):
        merged = deep_merge({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}})
        assert merged == {"a": {"b": 1, "c": 3}}

    def test_base_untouched(self):
        base = {"a": {"b": 1}}
        deep_merge(base, {"a": {"b": 2}})
        assert base == {"a": {"b": 1}}


class TestRunners:
    def test_koopman_identity(self):
        result, _ = execute(load_config("koopman-identity"))
        assert result.passed
        assert {"reduced_negativity", "probability_conserved", "dense_oracle"} <= names(result)
        assert len(result.tables["trials"]) == 5

    def test_koopman_bell(self):
        cfg = with_param(load_config("koopman-bell"), "trials", 3)
        result, _ = execute(cfg)
        assert result.passed
        assert "sector_negativity_invariant" in names(result)

    def test_koopman_parallel_matches_serial(self):
        cfg = with_param(load_config("koopman"), "trials", 6)
        serial, _ = execute(cfg, jobs=1)
        threaded, _ = execute(cfg, jobs=3)
        assert serial.summary == threaded.summary

    def test_meanfield_short(self):
        cfg = load_config({
            "kind": "meanfield",
            "params": {"t_end": 0.2, "witness": None, "richardson": None},
        })
        result, _ = execute(cfg)
        assert result.passed
        assert {"factorization", "energy_conserved", "norm_conserved"} <= names(result)
        assert list(result.tables["trajectory"].columns)[:3] == ["t", "x0", "k0"]

    def test_meanfield_negative_control(self):
        cfg = load_config({
            "preset": "meanfield-negative-control",
            "params": {"witness": None, "richardson": None},
        })
        result, _ = execute(cfg)
        assert "negative_control_entangles" in names(result)
        assert result.passed

    def test_meanfield_richardson(self):
        cfg = load_config({"kind": "meanfield", "params": {"t_end": 0.05, "witness": None}})
        result, _ = execute(cfg)
        assert result.summary["richardson_ratio"] >= 12.0

    def test_particles(self):
        result, _ = execute(load_config(SMALL_PARTICLES))
        assert result.passed, [c for c in result.checks if not c.passed]
        assert "postselected_entropy" in names(result)
        assert "control_g1_zero_entropy" in names(result)
        assert result.records["entanglement"]["entropy"] > 0.01
        assert "postselected" in result.states

    def test_particles_uncoupled_is_product(self):
        data = deep_merge(SMALL_PARTICLES, {"params": {"g1": 0.0, "controls": False}})
        result, _ = execute(load_config(data))
        assert "postselected_product" in names(result)
        assert result.passed

    def test_general(self):
        result, _ = execute(load_config(SMALL_GENERAL))
        assert result.passed, [c for c in result.checks if not c.passed]
        table = result.tables["widths"]
        assert list(table["width"]) == [0.5, 1.0, 2.0]
        assert table["ensemble_conditional_negativity"].is_monotonic_increasing
        assert {"conditional_reference", "conditional_negativity_increases"} <= names(result)

    def test_general_preset_checks_follow_t(self):
        cfg = with_param(load_config(deep_merge(SMALL_GENERAL, {"params": {"require_monotone": False}})), "t", 0.5)
        result, _ = execute(cfg)
        assert result.passed, [c for c in result.checks if not c.passed]
        assert "conditional_reference" in names(result)
        assert result.summary["conditional_negativity"] == pytest.approx(math.sin(0.25) / 2, abs=1e-8)

    def test_general_pinned_value_fails_off_quarter_turn(self):
        data = deep_merge(SMALL_GENERAL, {"params": {"t": 0.5, "expected_conditional": 0.5, "require_monotone": False}})
        result, _ = execute(load_config(data))
        failed = {c.name for c in result.checks if not c.passed}
        assert failed == {"conditional_oracle"}

    def test_brackets(self):
        cfg = load_config({
            "kind": "brackets",
            "params": {
                "qb_pairs": 2,
                "qb_states": 2,
                "cb_pairs": [["x", "k"], ["x*k", "k"]],
                "cb_states": 2,
            },
        })
        result, _ = execute(cfg)
        assert result.passed, [c for c in result.checks if not c.passed]
        assert {"qb_isomorphism", "extension_property", "cb_x_k", "cb_x*k_k"} <= names(result)


class TestReport:
    def test_deterministic(self):
        cfg = load_config("koopman-identity")
        a = build_report(cfg, *execute(cfg)).to_dict()
        b = build_report(cfg, *execute(cfg)).to_dict()
        assert a == b
        assert "wall_time_s" not in a

    def test_hash_ignores_out_dir(self):
        cfg = load_config("koopman-identity")
        moved = cfg.model_copy(update={"out_dir": "/elsewhere"})
        assert config_hash(moved) == config_hash(cfg)

    def test_hash_tracks_seed(self):
        cfg = load_config("koopman-identity")
        assert config_hash(cfg.model_copy(update={"seed": 1})) != config_hash(cfg)

    def test_passed_reflects_checks(self):
        cfg = load_config("koopman-identity")
        result, elapsed = execute(cfg)
        result.checks.append(CheckResult("forced", False, 1.0, 0.0, "<="))
        report = build_report(cfg, result, elapsed)
        assert not report.passed
        assert report.to_dict()["passed"] is False
