"""
qcmediator Acceptance Suite

The eight desk-scale criteria behind `qcmediator accept`:
- each criterion runs one or more preset-based scenarios
- every check is reported with measured value and tolerance
- tolerance overrides apply to all runs (harness self-test)
- runtime budgets are logged to metrics, never to the pass/fail matrix
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from qcmediator.errors import ConfigValidationError
from qcmediator.metrics import RunMetrics, StructuredLogger
from qcmediator.scenarios import (
    DEFAULT_TOLERANCES,
    CheckResult,
    ScenarioResult,
    config_hash,
    execute,
    load_preset,
    validate_config,
    deep_merge,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunSpec:
    """One scenario run inside a criterion: preset plus overrides."""
    preset: str
    overrides: Dict[str, Any] = field(default_factory=dict)
    only: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    runs: Tuple[RunSpec, ...]
    budget_s: float
    repeat_check: Optional[str] = None


CRITERIA: Tuple[Criterion, ...] = (
    Criterion(
        1, "Koopman no-go",
        (RunSpec("koopman", {"params": {"trials": 100, "dense_check": False}}),),
        budget_s=10,
    ),
    Criterion(
        2, "Koopman dense-oracle equivalence",
        (RunSpec("koopman", {"params": {"trials": 20, "dense_check": True}}, only=("dense_oracle",)),),
        budget_s=10,
    ),
    Criterion(
        3, "Mean-field factorization",
        (
            RunSpec("meanfield", {"params": {"witness": None}}),
            RunSpec("meanfield-negative-control"),
        ),
        budget_s=30,
    ),
    Criterion(
        4, "Mean-field nonlinearity witness",
        (RunSpec(
            "meanfield",
            {"params": {"t_end": 0.01, "richardson": None}},
            only=("nonlinearity_witness",),
        ),),
        budget_s=10,
    ),
    Criterion(5, "Bracket isomorphisms", (RunSpec("brackets"),), budget_s=60),
    Criterion(
        6, "Particle counterexample",
        (RunSpec("particles", {"params": {"mixture": False}}),),
        budget_s=60,
    ),
    # The pinned values hold only at the preset's t²/2 = π/4.
    Criterion(
        7, "General counterexample",
        (RunSpec("general", {"params": {
            "expected_conditional": 0.5,
            "expect_maximal_mn_entanglement": True,
            "require_monotone": True,
        }}),),
        budget_s=120,
    ),
    Criterion(
        8, "Mixture computation",
        (RunSpec(
            "particles",
            {"params": {"controls": False, "mixture": True}},
            only=("mixture_trace", "mixture_probability_sum"),
        ),),
        budget_s=300,
        repeat_check="mixture_negativity",
    ),
)


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: List[CheckResult]
    config_hashes: List[str]

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion": self.number,
            "title": self.title,
            "passed": self.passed,
            "config_hashes": self.config_hashes,
            "checks": [c.to_dict() for c in self.checks],
        }


@dataclass
class AcceptanceReport:
    seed: int
    tolerances: Dict[str, float]
    criteria: List[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "tolerances": dict(sorted(self.tolerances.items())),
            "passed": self.passed,
            "criteria": [c.to_dict() for c in self.criteria],
        }

    def matrix(self) -> str:
        """Plain-text pass/fail matrix."""
        lines = []
        for c in self.criteria:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.number}. {c.title}")
            for chk in c.checks:
                mark = "ok " if chk.passed else "BAD"
                lines.append(f"    {mark} {chk.name}: {chk.measured} {chk.comparator} {chk.tolerance}")
        lines.append(f"Overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def parse_overrides(items: Sequence[str]) -> Dict[str, float]:
    """Parse NAME=VALUE tolerance overrides."""
    out: Dict[str, float] = {}
    for item in items:
        name, sep, value = item.partition("=")
        name = name.strip()
        if not sep or not name:
            raise ConfigValidationError(f"Override {item!r} is not of the form NAME=VALUE", fields=["override"])
        if name not in DEFAULT_TOLERANCES:
            raise ConfigValidationError(
                f"Unknown tolerance {name!r}; known: {', '.join(sorted(DEFAULT_TOLERANCES))}",
                fields=[f"override.{name}"],
            )
        try:
            out[name] = float(value)
        except ValueError:
            raise ConfigValidationError(f"Override {name} has non-numeric value {value!r}", fields=[f"override.{name}"]) from None
    return out


def _build(spec: RunSpec, seed: int, tolerances: Dict[str, float]):
    data = deep_merge(load_preset(spec.preset), spec.overrides)
    data["seed"] = seed
    data["tolerances"] = dict(tolerances)
    return validate_config(data)


def _select(result: ScenarioResult, only: Optional[Tuple[str, ...]]) -> List[CheckResult]:
    if only is None:
        return list(result.checks)
    picked = [c for c in result.checks if c.name in only]
    missing = set(only) - {c.name for c in picked}
    # A requested check that never ran is a failure, not a skip.
    picked += [CheckResult(name, False, None, None, "missing") for name in sorted(missing)]
    return picked


def run_criterion(
    criterion: Criterion,
    seed: int,
    tolerances: Dict[str, float],
    metrics: RunMetrics,
    events: StructuredLogger,
    jobs: int = 1,
) -> CriterionResult:
    checks: List[CheckResult] = []
    hashes: List[str] = []
    with metrics.timer(f"criterion_{criterion.number}", budget_s=criterion.budget_s) as timer:
        for spec in criterion.runs:
            cfg = _build(spec, seed, tolerances)
            digest = config_hash(cfg)
            hashes.append(digest)
            events.log_run_started(cfg.kind, digest, cfg.seed)
            result, elapsed = execute(cfg, jobs=jobs)
            metrics.record(f"run_{spec.preset}", elapsed * 1000.0, failed=not result.passed)
            selected = _select(result, spec.only)
            for c in selected:
                events.log_check(c.name, c.passed, c.measured, c.tolerance, elapsed * 1000.0)
            checks += selected

            if criterion.repeat_check is not None:
                again, _ = execute(cfg, jobs=jobs)
                first = result.summary.get(criterion.repeat_check)
                second = again.summary.get(criterion.repeat_check)
                checks.append(CheckResult(
                    f"{criterion.repeat_check}_reproducible",
                    first is not None and first == second,
                    second,
                    first,
                    "==",
                ))
        timer.failed = not all(c.passed for c in checks)

    outcome = CriterionResult(criterion.number, criterion.title, checks, hashes)
    logger.info(f"criterion {criterion.number} ({criterion.title}): {'pass' if outcome.passed else 'fail'}")
    return outcome


def run_acceptance(
    seed: int,
    overrides: Optional[Dict[str, float]] = None,
    metrics: Optional[RunMetrics] = None,
    events: Optional[StructuredLogger] = None,
    jobs: int = 1,
    criteria: Sequence[Criterion] = CRITERIA,
) -> AcceptanceReport:
    """
    Run every criterion. Criteria run in parallel when jobs > 1; results are
    assembled in criterion order.
    """
    tolerances = {**DEFAULT_TOLERANCES, **(overrides or {})}
    metrics = metrics if metrics is not None else RunMetrics()
    events = events if events is not None else StructuredLogger(enabled=False)

    def one(c: Criterion) -> CriterionResult:
        return run_criterion(c, seed, tolerances, metrics, events, jobs=1)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, criteria))
    else:
        results = [one(c) for c in criteria]

    report = AcceptanceReport(seed, tolerances, results)
    events.log_run_finished("accept", report.passed, {c.number: c.passed for c in results})
    return report
