"""Tests for environment configuration and the exit-code contract."""

import pytest

from qcmediator.config import LogLevel, QCMediatorConfig, resolve_hbar
from qcmediator.errors import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_GUARD,
    ArgumentError,
    CapacityError,
    ConfigValidationError,
    DomainError,
    GridTooSmallError,
    QCMediatorError,
    StepSizeError,
    WrapContaminationError,
    exit_code_for,
)


class TestFromEnv:
    def test_defaults(self, monkeypatch):
        for key in ("HBAR", "MAX_TOTAL_DIM", "JOBS", "LOG_LEVEL", "DEFAULT_SEED"):
            monkeypatch.delenv(f"QCMEDIATOR_{key}", raising=False)
        config = QCMediatorConfig.from_env()
        assert config.hbar == 1.0
        assert config.max_total_dim == 2 ** 20
        assert config.jobs == 1
        assert config.log_level is LogLevel.INFO
        assert config.default_seed == 20190513

    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv("QCMEDIATOR_HBAR", "0.5")
        monkeypatch.setenv("QCMEDIATOR_JOBS", "4")
        monkeypatch.setenv("QCMEDIATOR_LOG_LEVEL", "debug")
        monkeypatch.setenv("QCMEDIATOR_STRUCTURED_LOGS", "no")
        config = QCMediatorConfig.from_env()
        assert config.hbar == 0.5
        assert config.jobs == 4
        assert config.log_level is LogLevel.DEBUG
        assert config.structured_logs is False

    def test_malformed_values_fall_back(self, monkeypatch):
        monkeypatch.setenv("QCMEDIATOR_HBAR", "planck")
        monkeypatch.setenv("QCMEDIATOR_JOBS", "many")
        monkeypatch.setenv("QCMEDIATOR_LOG_LEVEL", "chatty")
        config = QCMediatorConfig.from_env()
        assert config.hbar == 1.0
        assert config.jobs == 1
        assert config.log_level is LogLevel.INFO


class TestValidate:
    def test_default_is_valid(self):
        assert QCMediatorConfig().validate() is True

    @pytest.mark.parametrize("field, value", [
        ("hbar", 0.0),
        ("max_total_dim", 1),
        ("jobs", 0),
        ("default_seed", -1),
        ("preset_dir", "/nonexistent/presets"),
    ])
    def test_rejects_bad_field(self, field, value):
        config = QCMediatorConfig(**{field: value})
        with pytest.raises(ValueError):
            config.validate()

    def test_str_lists_fields(self):
        text = str(QCMediatorConfig())
        assert "hbar" in text and "out_dir" in text


def test_resolve_hbar():
    assert resolve_hbar(2.0) == 2.0
    assert resolve_hbar() > 0


class TestExitCodes:
    def test_config_errors(self):
        assert exit_code_for(ConfigValidationError("bad", fields=["params.width"])) == EXIT_CONFIG

    @pytest.mark.parametrize("error", [CapacityError, StepSizeError, GridTooSmallError, WrapContaminationError])
    def test_guard_errors(self, error):
        assert exit_code_for(error("tripped")) == EXIT_GUARD

    def test_other_errors(self):
        assert exit_code_for(DomainError("zero probability")) == EXIT_CHECK_FAILED
        assert exit_code_for(QCMediatorError("generic")) == EXIT_CHECK_FAILED

    def test_value_error_family(self):
        assert isinstance(ArgumentError("x"), ValueError)
        assert isinstance(DomainError("x"), ValueError)
        assert isinstance(ConfigValidationError("x"), ValueError)

    def test_hint_in_message(self):
        assert "reduce dt" in str(StepSizeError("drift", hint="reduce dt"))
