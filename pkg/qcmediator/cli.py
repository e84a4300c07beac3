"""
qcmediator Command Line Interface

Subcommands:
    run             run one scenario from a preset name or JSON config
    sweep           vary one numeric parameter over a list of values
    accept          run the acceptance suite and print the pass/fail matrix
    list-scenarios  list the shipped presets
    schema          print the JSON schema of run configurations

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid configuration,
3 a capacity or numerical guard tripped.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from qcmediator.acceptance import CRITERIA, AcceptanceReport, Criterion, parse_overrides, run_acceptance
from qcmediator.config import DEFAULT_CONFIG, ENV_PREFIX
from qcmediator.errors import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    ConfigValidationError,
    QCMediatorError,
    exit_code_for,
)
from qcmediator.metrics import RunMetrics, StructuredLogger, configure_logging
from qcmediator.persistence import ArtifactWriter
from qcmediator.scenarios import (
    AnyRun,
    OutputFormat,
    RunConfig,
    RunReport,
    ScenarioResult,
    build_report,
    config_hash,
    execute,
    list_presets,
    load_config,
    load_preset,
    with_param,
)

logger = logging.getLogger(__name__)


def resolve_out_dir(cli_out: Optional[str], cfg: Optional[AnyRun] = None) -> Path:
    """--out, then the environment, then the config file, then the default."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get(f"{ENV_PREFIX}OUT_DIR")
    if env:
        return Path(env)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    return Path(DEFAULT_CONFIG.out_dir)


def write_artifacts(
    writer: ArtifactWriter,
    result: ScenarioResult,
    formats: Sequence[OutputFormat],
) -> None:
    for name, frame in result.tables.items():
        if OutputFormat.CSV in formats:
            writer.write_frame(f"{name}.csv", frame)
        if OutputFormat.JSON in formats:
            writer.write_json(f"{name}.json", frame.to_dict(orient="records"))
    for name, state in result.states.items():
        writer.write_state(f"{name}_state.csv", state)
    for name, record in result.records.items():
        writer.write_json(f"{name}.json", record)


def run(
    cfg: AnyRun,
    out_dir: Optional[Path] = None,
    jobs: int = 1,
    metrics: Optional[RunMetrics] = None,
    events: Optional[StructuredLogger] = None,
) -> RunReport:
    """
    Execute one scenario, write report.json, metrics.json and artifacts.

    Returns the report; the caller decides the exit code.
    """
    metrics = metrics if metrics is not None else RunMetrics()
    events = events if events is not None else StructuredLogger(enabled=False)

    report_hash = config_hash(cfg)
    events.log_run_started(cfg.kind, report_hash, cfg.seed)
    try:
        with metrics.timer(f"run_{cfg.kind}") as timer:
            result, elapsed = execute(cfg, jobs=jobs)
            timer.failed = not result.passed
    except QCMediatorError as e:
        events.log_guard(e, {"kind": cfg.kind, "config_hash": report_hash})
        raise

    report = build_report(cfg, result, elapsed)
    for c in report.checks:
        events.log_check(c.name, c.passed, c.measured, c.tolerance, elapsed * 1000.0)

    if out_dir is not None:
        writer = ArtifactWriter(out_dir)
        writer.write_json("report.json", report.to_dict())
        writer.write_json("metrics.json", {"wall_time_s": elapsed, **metrics.to_dict()})
        write_artifacts(writer, result, cfg.formats)
        logger.info(f"Wrote {len(writer.written)} artifacts to {out_dir}")

    events.log_run_finished(cfg.kind, report.passed, report.summary)
    return report


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _lookup(params: Dict[str, Any], path: str) -> Any:
    node: Any = params
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigValidationError(f"Unknown parameter {path!r}", fields=[f"params.{path}"])
        node = node[part]
    return node


def parse_values(text: str) -> List[float]:
    """Comma-separated numbers; an empty string gives an empty list."""
    values = []
    for item in (v.strip() for v in text.split(",")):
        if not item:
            continue
        try:
            number = float(item)
        except ValueError:
            raise ConfigValidationError(f"Sweep value {item!r} is not numeric", fields=["values"]) from None
        values.append(number)
    return values


def sweep(cfg: AnyRun, param: str, values: Sequence[float], jobs: int = 1) -> pd.DataFrame:
    """
    One row per value: the value, overall pass flag and the scalar summary.

    List-valued parameters (e.g. widths) are swept one element at a time.
    """
    current = _lookup(cfg.model_dump(mode="json")["params"], param)
    numeric = _is_number(current) or (
        isinstance(current, list) and current and all(_is_number(v) for v in current)
    )
    if not numeric:
        raise ConfigValidationError(f"Parameter {param!r} is not numeric", fields=[f"params.{param}"])
    if not values:
        return pd.DataFrame(columns=[param, "passed"])

    entries = [(v, with_param(cfg, param, v)) for v in values]

    def one(entry) -> Dict[str, Any]:
        value, c = entry
        result, _ = execute(c, jobs=1)
        row: Dict[str, Any] = {param: value, "passed": result.passed}
        for key, item in result.summary.items():
            if item is None or _is_number(item) or isinstance(item, str):
                row[key] = item
        return row

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, entries))
    else:
        rows = [one(e) for e in entries]
    return pd.DataFrame(rows)


def accept(
    seed: int,
    overrides: Optional[Dict[str, float]] = None,
    out_dir: Optional[Path] = None,
    jobs: int = 1,
    events: Optional[StructuredLogger] = None,
    fmt: OutputFormat = OutputFormat.JSON,
    criteria: Sequence[Criterion] = CRITERIA,
) -> AcceptanceReport:
    """
    Run the suite and write report.json and metrics.json.

    With fmt=csv the pass/fail matrix is also written as checks.csv, one row
    per check.
    """
    metrics = RunMetrics()
    report = run_acceptance(seed, overrides, metrics=metrics, events=events, jobs=jobs, criteria=criteria)
    if out_dir is not None:
        writer = ArtifactWriter(out_dir)
        writer.write_json("report.json", report.to_dict())
        writer.write_json("metrics.json", metrics.to_dict())
        if fmt == OutputFormat.CSV:
            rows = [
                {"criterion": c.number, "title": c.title, **chk.to_dict()}
                for c in report.criteria
                for chk in c.checks
            ]
            writer.write_frame("checks.csv", pd.DataFrame(rows))
    return report


# ============================================================================
# Argument parsing
# ============================================================================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--out", type=str, default=None, help="Output directory (wins over QCMEDIATOR_OUT_DIR)")
    parser.add_argument(
        "--jobs",
        type=int,
        default=DEFAULT_CONFIG.jobs,
        help=f"Worker threads (default: {DEFAULT_CONFIG.jobs})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcmediator",
        description="Hybrid quantum-classical entanglement scenarios",
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=DEFAULT_CONFIG.log_level.value,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help=f"Log level (default: {DEFAULT_CONFIG.log_level.value})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run one scenario")
    p_run.add_argument("--config", required=True, help="Preset name or path to a JSON config")
    p_run.add_argument("--format", choices=[f.value for f in OutputFormat], default=None,
                       help="Artifact format (default: the config's formats)")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="Sweep one numeric parameter")
    p_sweep.add_argument("--config", required=True, help="Preset name or path to a JSON config")
    p_sweep.add_argument("--param", required=True, help="Dotted parameter path, e.g. psi_c.width")
    p_sweep.add_argument("--values", required=True, help="Comma-separated values")
    p_sweep.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.CSV.value)
    _add_common(p_sweep)

    p_accept = sub.add_parser("accept", help="Run the acceptance suite")
    p_accept.add_argument("--override", action="append", default=[], metavar="NAME=VALUE",
                          help="Tolerance override, repeatable")
    p_accept.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.JSON.value,
                          help="csv also writes checks.csv next to report.json")
    _add_common(p_accept)

    sub.add_parser("list-scenarios", help="List shipped presets")
    sub.add_parser("schema", help="Print the run configuration JSON schema")
    return parser


def _load(args: argparse.Namespace) -> AnyRun:
    cfg = load_config(args.config)
    updates: Dict[str, Any] = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "format", None) and args.command == "run":
        updates["formats"] = [args.format]
    if updates:
        cfg = load_config({**cfg.model_dump(mode="json"), **updates})
    return cfg


def _cmd_run(args: argparse.Namespace, events: StructuredLogger) -> int:
    cfg = _load(args)
    out_dir = resolve_out_dir(args.out, cfg) / (cfg.name or cfg.kind)
    report = run(cfg, out_dir, jobs=args.jobs, events=events)
    for c in report.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.measured} {c.comparator} {c.tolerance}")
    print(f"{cfg.kind} ({report.config_hash[:12]}): {'PASS' if report.passed else 'FAIL'} -> {out_dir}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_sweep(args: argparse.Namespace, events: StructuredLogger) -> int:
    cfg = _load(args)
    frame = sweep(cfg, args.param, parse_values(args.values), jobs=args.jobs)
    out_dir = resolve_out_dir(args.out, cfg) / f"sweep-{cfg.name or cfg.kind}-{args.param}"
    writer = ArtifactWriter(out_dir)
    if args.format == OutputFormat.JSON.value:
        writer.write_json("sweep.json", frame.to_dict(orient="records"))
    else:
        writer.write_frame("sweep.csv", frame)
    print(frame.to_string(index=False) if len(frame) else f"(empty sweep over {args.param})")
    passed = bool(frame["passed"].all()) if len(frame) else True
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _cmd_accept(args: argparse.Namespace, events: StructuredLogger) -> int:
    overrides = parse_overrides(args.override)
    seed = args.seed if args.seed is not None else DEFAULT_CONFIG.default_seed
    out_dir = resolve_out_dir(args.out) / "accept"
    report = accept(seed, overrides, out_dir, jobs=args.jobs, events=events, fmt=OutputFormat(args.format))
    print(report.matrix())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_list(args: argparse.Namespace, events: StructuredLogger) -> int:
    for name in list_presets():
        print(f"{name:32s} {load_preset(name).get('kind', '?')}")
    return EXIT_OK


def _cmd_schema(args: argparse.Namespace, events: StructuredLogger) -> int:
    print(json.dumps(RunConfig.model_json_schema(), indent=2))
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "accept": _cmd_accept,
    "list-scenarios": _cmd_list,
    "schema": _cmd_schema,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    events = StructuredLogger("qcmediator.events", enabled=DEFAULT_CONFIG.structured_logs)
    try:
        return COMMANDS[args.command](args, events)
    except QCMediatorError as e:
        code = exit_code_for(e)
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
