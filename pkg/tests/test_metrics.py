"""Tests for timing metrics and structured events."""

import json
import logging
import threading

import pytest

from qcmediator.errors import StepSizeError
from qcmediator.metrics import CheckMetrics, RunMetrics, StructuredLogger


class TestCheckMetrics:
    def test_record(self):
        m = CheckMetrics("c")
        m.record(10.0)
        m.record(30.0, failed=True)
        d = m.to_dict()
        assert d["count"] == 2
        assert d["failures"] == 1
        assert d["avg_ms"] == 20.0
        assert d["min_ms"] == 10.0

    def test_empty(self):
        assert CheckMetrics("c").to_dict()["min_ms"] == 0

    def test_budget(self):
        m = CheckMetrics("c", budget_s=0.01)
        m.record(20.0)
        assert m.over_budget


class TestRunMetrics:
    def test_timer_records_failure_on_exception(self):
        metrics = RunMetrics()
        with pytest.raises(RuntimeError):
            with metrics.timer("boom"):
                raise RuntimeError("x")
        assert metrics.checks["boom"].failures == 1

    def test_timer_failed_flag(self):
        metrics = RunMetrics()
        with metrics.timer("soft") as timer:
            timer.failed = True
        assert metrics.checks["soft"].failures == 1

    def test_concurrent_records(self):
        metrics = RunMetrics()

        def work():
            for _ in range(200):
                metrics.record("shared", 1.0)

        threads = [threading.Thread(target=work) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert metrics.checks["shared"].count == 800

    def test_export_is_json(self):
        metrics = RunMetrics()
        metrics.record("a", 1.0)
        assert "a" in json.loads(metrics.export_json())["checks"]


class TestStructuredLogger:
    def test_check_event(self, caplog):
        events = StructuredLogger("qcmediator.test-events")
        with caplog.at_level(logging.INFO, logger="qcmediator.test-events"):
            events.log_check("factorization", False, 1e-3, 1e-8, 12.5)
        entry = json.loads(caplog.records[-1].getMessage())
        assert entry["event"] == "check_completed"
        assert entry["status"] == "fail"
        assert caplog.records[-1].levelno == logging.WARNING

    def test_guard_event(self, caplog):
        events = StructuredLogger("qcmediator.test-events")
        with caplog.at_level(logging.ERROR, logger="qcmediator.test-events"):
            events.log_guard(StepSizeError("norm drift"), {"kind": "meanfield"})
        entry = json.loads(caplog.records[-1].getMessage())
        assert entry["error"] == "StepSizeError"
        assert entry["kind"] == "meanfield"

    def test_disabled(self, caplog):
        events = StructuredLogger("qcmediator.test-events", enabled=False)
        with caplog.at_level(logging.DEBUG, logger="qcmediator.test-events"):
            events.log_run_started("koopman", "abc", 1)
        assert not caplog.records
