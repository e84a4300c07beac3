"""
qcmediator Observability & Metrics

Run-level timing collection and structured JSON event logging:
- Per-check wall-time tracking (count/min/max/avg)
- Runtime budget warnings
- Structured JSON events for runs, checks, guards and integrator drift

Timings never enter report.json; they are exported separately so that
reports stay byte-deterministic.
"""

import json
import logging
import threading
import time
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


def configure_logging(level: str = "INFO") -> None:
    """Install the root log format used by the CLI."""
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, level.upper(), logging.INFO),
    )


@dataclass
class CheckMetrics:
    """Timing for one named check or scenario."""
    name: str
    count: int = 0
    total_ms: float = 0.0
    min_ms: float = float("inf")
    max_ms: float = 0.0
    failures: int = 0
    budget_s: Optional[float] = None

    @property
    def avg_ms(self) -> float:
        if self.count == 0:
            return 0.0
        return self.total_ms / self.count

    @property
    def over_budget(self) -> bool:
        return self.budget_s is not None and self.total_ms / 1000.0 > self.budget_s

    def record(self, elapsed_ms: float, failed: bool = False) -> None:
        self.count += 1
        self.total_ms += elapsed_ms
        self.min_ms = min(self.min_ms, elapsed_ms)
        self.max_ms = max(self.max_ms, elapsed_ms)
        if failed:
            self.failures += 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "count": self.count,
            "failures": self.failures,
            "total_ms": round(self.total_ms, 3),
            "avg_ms": round(self.avg_ms, 3),
            "min_ms": round(self.min_ms, 3) if self.min_ms != float("inf") else 0,
            "max_ms": round(self.max_ms, 3),
            "budget_s": self.budget_s,
            "over_budget": self.over_budget,
        }


class RunMetrics:
    """
    Thread-safe collector of per-check timings.

    Sweeps and the acceptance suite record from worker threads; the lock
    keeps the counters consistent.
    """

    def __init__(self):
        self.checks: Dict[str, CheckMetrics] = {}
        self._lock = threading.RLock()
        self.start_time = time.time()

    def record(
        self,
        name: str,
        elapsed_ms: float,
        failed: bool = False,
        budget_s: Optional[float] = None,
    ) -> None:
        with self._lock:
            if name not in self.checks:
                self.checks[name] = CheckMetrics(name, budget_s=budget_s)
            entry = self.checks[name]
            entry.record(elapsed_ms, failed)
            if entry.over_budget:
                logger.warning(
                    f"{name} took {entry.total_ms / 1000.0:.2f}s, budget {entry.budget_s}s"
                )

    def timer(self, name: str, budget_s: Optional[float] = None) -> "_Timer":
        """Context manager recording the wall time of its body."""
        return _Timer(self, name, budget_s)

    def to_dict(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "timestamp": datetime.now().isoformat(),
                "uptime_seconds": round(time.time() - self.start_time, 3),
                "checks": {name: m.to_dict() for name, m in sorted(self.checks.items())},
            }

    def export_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def reset(self) -> None:
        with self._lock:
            self.checks.clear()


class _Timer:
    def __init__(self, metrics: RunMetrics, name: str, budget_s: Optional[float]):
        self.metrics = metrics
        self.name = name
        self.budget_s = budget_s
        self.elapsed_ms = 0.0
        self.failed = False

    def __enter__(self) -> "_Timer":
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed_ms = (time.perf_counter() - self._t0) * 1000.0
        self.metrics.record(self.name, self.elapsed_ms, self.failed or exc_type is not None, self.budget_s)
        return False


class StructuredLogger:
    """
    Structured JSON logging of run events.

    One JSON object per event, suitable for log aggregation.
    """

    def __init__(self, name: str = "qcmediator", enabled: bool = True):
        self.logger = logging.getLogger(name)
        self.enabled = enabled

    def _emit(self, level: int, entry: Dict[str, Any]) -> None:
        if not self.enabled:
            return
        entry["timestamp"] = datetime.now().isoformat()
        self.logger.log(level, json.dumps(entry, default=str))

    def log_run_started(self, kind: str, config_hash: str, seed: int) -> None:
        self._emit(logging.INFO, {
            "event": "run_started",
            "kind": kind,
            "config_hash": config_hash,
            "seed": seed,
        })

    def log_check(
        self,
        name: str,
        passed: bool,
        measured: Any,
        tolerance: Any,
        elapsed_ms: float,
    ) -> None:
        self._emit(logging.INFO if passed else logging.WARNING, {
            "event": "check_completed",
            "check": name,
            "status": "pass" if passed else "fail",
            "measured": measured,
            "tolerance": tolerance,
            "elapsed_ms": round(elapsed_ms, 3),
        })

    def log_guard(self, error: Exception, details: Optional[Dict[str, Any]] = None) -> None:
        entry = {
            "event": "guard_tripped",
            "error": type(error).__name__,
            "message": str(error),
        }
        if details:
            entry.update(details)
        self._emit(logging.ERROR, entry)

    def log_drift(self, step: int, t: float, drift: float) -> None:
        self._emit(logging.DEBUG, {
            "event": "integrator_drift",
            "step": step,
            "t": t,
            "norm_drift": drift,
        })

    def log_run_finished(self, kind: str, passed: bool, summary: Dict[str, Any]) -> None:
        self._emit(logging.INFO, {
            "event": "run_finished",
            "kind": kind,
            "status": "pass" if passed else "fail",
            "summary": summary,
        })
