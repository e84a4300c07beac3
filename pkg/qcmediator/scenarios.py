"""
qcmediator Scenario Layer

Schema-validated run configurations and the runners behind `run`, `sweep`
and `accept`:
- pydantic models per scenario kind (unknown keys rejected)
- versioned JSON presets holding every physical default
- one runner per kind producing pass/fail checks, a flat summary and
  plot-ready artifacts
- RunReport with a git-style content hash of the validated config
"""

import copy
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, RootModel, ValidationError, field_validator, model_validator

from qcmediator.config import DEFAULT_CONFIG
from qcmediator.counterexamples import (
    GaussianFactor,
    GeneralScenario,
    ParticleScenario,
    conditional_reference,
    general_report,
    initial_state,
    mixture_density,
    mn_factor_state,
    particle_energy,
    particle_pde_residual,
    postselect_x,
    propagate_particle,
)
from qcmediator.ensemble import (
    ConfigurationGrid,
    ContinuousAxis,
    DiscreteAxis,
    EnsembleState,
    HybridWavefunction,
    cb_convergence,
    classical_observable,
    gaussian_ensemble,
    GaussianSpec,
    marginal_moments,
    operator_on,
    poisson_bracket,
    quantum_observable,
    qubit_grid,
    random_discrete_state,
    random_gaussian_specs,
    verify_qb,
)
from qcmediator.errors import ConfigValidationError
from qcmediator.hilbert import (
    Bipartition,
    HilbertSpace,
    Operator,
    QuantumState,
    SIGMA_X,
    SIGMA_Y,
    pauli,
    random_hermitian,
    schmidt,
)
from qcmediator.koopman import ScenarioMode, run_koopman_scenario
from qcmediator.meanfield import (
    HAMILTONIAN_REGISTRY,
    MeanFieldState,
    build_hamiltonian,
    evolve,
    factorization_check,
    mean_hamiltonian,
    nonlinearity_witness,
    product_state,
    qubit_state,
)
from qcmediator.persistence import content_hash

logger = logging.getLogger(__name__)

PRESET_VERSION = 1

UNCOUPLED_HAMILTONIANS = frozenset({"zero", "constant-sigma-z"})

DEFAULT_TOLERANCES: Dict[str, float] = {
    "koopman_negativity": 1e-9,
    "koopman_dense": 1e-10,
    "koopman_local_invariance": 1e-8,
    "probability": 1e-12,
    "factorization": 1e-8,
    "energy_drift": 1e-6,
    "norm_drift": 1e-8,
    "negative_control_min": 0.01,
    "witness_fidelity_max": 1 - 1e-6,
    "richardson_min_ratio": 12.0,
    "qb_deviation": 1e-8,
    "cb_min_order": 1.9,
    "gradient_consistency": 1e-6,
    "extension": 1e-6,
    "particle_norm": 1e-6,
    "marginal_moments": 1e-6,
    "pde_residual": 1e-6,
    "entropy_min": 0.01,
    "entropy_refinement": 0.05,
    "control_entropy": 1e-8,
    "mixture_trace": 1e-8,
    "mixture_probability": 1e-6,
    "bch_infidelity": 1e-6,
    "widest_negativity_min": 0.45,
    "conditional_oracle": 1e-8,
}


class Kind(str, Enum):
    KOOPMAN = "koopman"
    MEANFIELD = "meanfield"
    PARTICLES = "particles"
    GENERAL = "general"
    BRACKETS = "brackets"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


# ============================================================================
# Schemas
# ============================================================================

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AxisSpec(_Strict):
    min: float
    max: float
    n_points: int = Field(ge=4)

    @model_validator(mode="after")
    def _range(self) -> "AxisSpec":
        if not self.max > self.min:
            raise ValueError(f"max ({self.max}) must exceed min ({self.min})")
        return self

    def axis(self, name: str, periodic: bool = False) -> ContinuousAxis:
        return ContinuousAxis(name, self.min, self.max, self.n_points, periodic)


class GaussianModel(_Strict):
    mean: float = 0.0
    width: float = Field(gt=0)
    slope: float = 0.0

    def factor(self) -> GaussianFactor:
        return GaussianFactor(self.mean, self.width, self.slope)


class QubitModel(_Strict):
    """cos θ|0⟩ + e^{iφ} sin θ|1⟩."""
    theta: float
    phase: float = 0.0

    def vector(self) -> np.ndarray:
        return qubit_state(self.theta, self.phase)


class KoopmanParams(_Strict):
    mode: ScenarioMode = ScenarioMode.RANDOM
    trials: int = Field(ge=1)
    labels_min: int = Field(ge=1)
    labels_max: int = Field(ge=1)
    rounds_min: int = Field(ge=0)
    rounds_max: int = Field(ge=0)
    qq_dims: Tuple[int, int] = (2, 2)
    sector_dim: int = Field(ge=1)
    dense_check: bool = True

    @model_validator(mode="after")
    def _ranges(self) -> "KoopmanParams":
        if self.labels_max < self.labels_min or self.rounds_max < self.rounds_min:
            raise ValueError("range maximum below minimum")
        return self


class WitnessModel(_Strict):
    psi0_index: int = Field(ge=0)
    phi0_index: int = Field(ge=0)
    x0: float
    k0: float
    t_end: float = Field(gt=0)
    dt: float = Field(gt=0)


class RichardsonModel(_Strict):
    t_end: float = Field(gt=0)
    dt: float = Field(gt=0)


class MeanFieldParams(_Strict):
    hamiltonian: str
    coupling: float = 1.0
    kinetic: bool = False
    mass: float = Field(default=1.0, gt=0)
    omega: float = 0.0
    x0: float
    k0: float
    psi_q: QubitModel
    psi_qp: Optional[QubitModel] = None
    t_end: float = Field(gt=0)
    dt: float = Field(gt=0)
    sample_every: int = Field(default=1, ge=1)
    expect_factorization: bool = True
    witness: Optional[WitnessModel] = None
    richardson: Optional[RichardsonModel] = None

    @field_validator("hamiltonian")
    @classmethod
    def _known(cls, v: str) -> str:
        if v not in HAMILTONIAN_REGISTRY:
            raise ValueError(f"unknown Hamiltonian {v!r}; choose one of {sorted(HAMILTONIAN_REGISTRY)}")
        return v


class ParticleParams(_Strict):
    g1: float
    g2: float
    t: float = Field(ge=0)
    q_axis: AxisSpec
    qp_axis: AxisSpec
    x_axis: AxisSpec
    psi_q: GaussianModel
    psi_qp: GaussianModel
    psi_c: GaussianModel
    a: float = 0.0
    refined_points: int = Field(ge=4)
    controls: bool = True
    mixture: bool = True
    coarse_q: AxisSpec
    coarse_qp: AxisSpec


OperatorName = Literal["x", "y", "z", "i", "0"]


class GeneralParams(_Strict):
    M: OperatorName = "z"
    N: OperatorName = "z"
    t: float = Field(ge=0)
    c_axis: AxisSpec
    psi_q: QubitModel
    psi_qp: QubitModel
    c_mean: float = 0.0
    widths: List[float] = Field(min_length=1)
    a: float = 0.0
    oracle: bool = True
    conditional_reference: bool = True
    expected_conditional: Optional[float] = None
    expect_maximal_mn_entanglement: bool = False
    require_monotone: bool = False

    @field_validator("widths")
    @classmethod
    def _positive(cls, v: List[float]) -> List[float]:
        if any(not w > 0 for w in v):
            raise ValueError("widths must be positive")
        return v


class BracketParams(_Strict):
    qb_levels: List[int] = Field(min_length=1)
    qb_pairs: int = Field(ge=1)
    qb_states: int = Field(ge=1)
    cb_pairs: List[Tuple[str, str]]
    cb_states: int = Field(ge=1)
    coarse: int = Field(ge=4)
    fine: int = Field(ge=4)
    bounds: Tuple[float, float] = (-8.0, 8.0)


class _RunBase(_Strict):
    preset_version: int = PRESET_VERSION
    name: Optional[str] = None
    seed: int = Field(default=DEFAULT_CONFIG.default_seed, ge=0, lt=2 ** 64)
    out_dir: Optional[str] = None
    formats: List[OutputFormat] = [OutputFormat.CSV, OutputFormat.JSON]
    hbar: float = Field(default_factory=lambda: DEFAULT_CONFIG.hbar, gt=0)
    tolerances: Dict[str, float] = {}

    @field_validator("tolerances")
    @classmethod
    def _known_tolerances(cls, v: Dict[str, float]) -> Dict[str, float]:
        unknown = sorted(set(v) - set(DEFAULT_TOLERANCES))
        if unknown:
            raise ValueError(f"unknown tolerance names {unknown}")
        return v

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))


class KoopmanRun(_RunBase):
    kind: Literal["koopman"]
    params: KoopmanParams


class MeanFieldRun(_RunBase):
    kind: Literal["meanfield"]
    params: MeanFieldParams


class ParticleRun(_RunBase):
    kind: Literal["particles"]
    params: ParticleParams


class GeneralRun(_RunBase):
    kind: Literal["general"]
    params: GeneralParams


class BracketRun(_RunBase):
    kind: Literal["brackets"]
    params: BracketParams


AnyRun = Union[KoopmanRun, MeanFieldRun, ParticleRun, GeneralRun, BracketRun]


class RunConfig(RootModel):
    """Validated run configuration; `root` holds the kind-specific model."""
    root: Annotated[AnyRun, Field(discriminator="kind")]


# ============================================================================
# Presets and loading
# ============================================================================

def preset_dir() -> Path:
    return Path(DEFAULT_CONFIG.preset_dir)


def list_presets() -> List[str]:
    return sorted(p.stem for p in preset_dir().glob("*.json"))


def load_preset(name: str) -> Dict[str, Any]:
    path = preset_dir() / f"{name}.json"
    if not path.exists():
        raise ConfigValidationError(
            f"No preset named {name!r}; available: {', '.join(list_presets())}",
            fields=["name"],
        )
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    data.setdefault("name", name)
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(data: Dict[str, Any]) -> AnyRun:
    """Validate raw data, turning pydantic errors into ConfigValidationError."""
    try:
        return RunConfig.model_validate(data).root
    except ValidationError as e:
        fields = [".".join(str(p) for p in err["loc"]) for err in e.errors()]
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigValidationError(f"Invalid run configuration: {details}", fields=fields) from None


def load_config(source: Union[str, Path, Dict[str, Any]]) -> AnyRun:
    """
    Load a run configuration from a preset name, a JSON file or a dict.

    Files and dicts are merged over the preset of their kind (or of their
    "preset" key), so they only need to state what differs.
    """
    if isinstance(source, dict):
        data = copy.deepcopy(source)
    else:
        path = Path(source)
        if path.suffix == ".json" or path.exists():
            try:
                with open(path, encoding="utf-8") as f:
                    data = json.load(f)
            except FileNotFoundError:
                raise ConfigValidationError(f"Config file {path} does not exist", fields=["config"]) from None
            except json.JSONDecodeError as e:
                raise ConfigValidationError(f"Config file {path} is not valid JSON: {e}", fields=["config"]) from None
        else:
            return validate_config(load_preset(str(source)))

    if not isinstance(data, dict):
        raise ConfigValidationError("Run configuration must be a JSON object", fields=[])
    base_name = data.pop("preset", None) or data.get("kind")
    if base_name is not None and (preset_dir() / f"{base_name}.json").exists():
        data = deep_merge(load_preset(str(base_name)), data)
    return validate_config(data)


def with_param(cfg: AnyRun, path: str, value: Any) -> AnyRun:
    """Copy of cfg with params.<path> replaced (dotted path), revalidated."""
    data = cfg.model_dump(mode="json")
    node = data["params"]
    parts = path.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigValidationError(f"Unknown parameter {path!r} for kind {cfg.kind}", fields=[f"params.{path}"])
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigValidationError(f"Unknown parameter {path!r} for kind {cfg.kind}", fields=[f"params.{path}"])
    current = node[leaf]
    if isinstance(current, list) and not isinstance(value, list):
        value = [value]
    node[leaf] = value
    return validate_config(data)


# ============================================================================
# Checks and reports
# ============================================================================

@dataclass(frozen=True)
class CheckResult:
    """One pass/fail line with the measured value and its tolerance."""
    name: str
    passed: bool
    measured: Any
    tolerance: Any
    comparator: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "comparator": self.comparator,
        }


def _num(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def check(name: str, measured: Any, comparator: str, tolerance: Any) -> CheckResult:
    measured, tolerance = _num(measured), _num(tolerance)
    ops: Dict[str, Callable[[Any, Any], bool]] = {
        "<=": lambda m, t: m <= t,
        "<": lambda m, t: m < t,
        ">=": lambda m, t: m >= t,
        ">": lambda m, t: m > t,
        "==": lambda m, t: m == t,
    }
    passed = bool(ops[comparator](measured, tolerance))
    return CheckResult(name, passed, measured, tolerance, comparator)


@dataclass
class ScenarioResult:
    """What a runner hands back: checks, flat summary, artifacts."""
    checks: List[CheckResult] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    records: Dict[str, Any] = field(default_factory=dict)
    states: Dict[str, EnsembleState] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass
class RunReport:
    """
    Config echo, content hash and checks of one run.

    wall_time_s is kept out of to_dict so that report.json depends only on
    (config, seed).
    """
    kind: str
    name: Optional[str]
    config: Dict[str, Any]
    config_hash: str
    checks: List[CheckResult]
    summary: Dict[str, Any]
    wall_time_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "name": self.name,
            "config": self.config,
            "config_hash": self.config_hash,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "summary": self.summary,
        }


# ============================================================================
# Runners
# ============================================================================

def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> List:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _child_seeds(seed: int, n: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def run_koopman(cfg: KoopmanRun, jobs: int = 1) -> ScenarioResult:
    p = cfg.params

    def trial(seed: int):
        rng = np.random.default_rng(seed)
        n_labels = int(rng.integers(p.labels_min, p.labels_max + 1))
        rounds = int(rng.integers(p.rounds_min, p.rounds_max + 1))
        return run_koopman_scenario(
            mode=p.mode,
            n_labels=n_labels,
            qq_dims=p.qq_dims,
            sector_dim=p.sector_dim,
            rounds=rounds,
            seed=seed,
            dense_check=p.dense_check,
        )

    reports = _parallel_map(trial, _child_seeds(cfg.seed, p.trials), jobs)
    table = pd.DataFrame([r.to_dict() for r in reports]).drop(
        columns=["sector_negativity_initial", "sector_negativity_final"]
    )
    result = ScenarioResult(tables={"trials": table})

    max_final = max(r.final_negativity for r in reports)
    max_post = max(r.postselected_negativity_max for r in reports)
    max_delta = max(abs(r.negativity_delta) for r in reports)
    max_prob = max(r.probability_drift for r in reports)
    if p.mode is ScenarioMode.BELL:
        result.checks += [
            check("sector_negativity_invariant", max(r.sector_negativity_drift for r in reports),
                  "<=", cfg.tol("koopman_local_invariance")),
            check("sector_entropy_invariant", max(r.sector_entropy_drift for r in reports),
                  "<=", cfg.tol("koopman_local_invariance")),
        ]
    else:
        result.checks += [
            check("reduced_negativity", max_final, "<=", cfg.tol("koopman_negativity")),
            check("postselected_negativity", max_post, "<=", cfg.tol("koopman_negativity")),
            check("negativity_delta", max_delta, "<=", cfg.tol("koopman_negativity")),
        ]
    result.checks.append(check("probability_conserved", max_prob, "<=", cfg.tol("probability")))
    dense = [r.dense_max_deviation for r in reports if r.dense_max_deviation is not None]
    if p.dense_check:
        result.checks.append(check("dense_oracle", max(dense) if dense else math.inf, "<=", cfg.tol("koopman_dense")))

    result.summary = {
        "trials": p.trials,
        "max_final_negativity": max_final,
        "max_postselected_negativity": max_post,
        "max_negativity_delta": max_delta,
        "max_dense_deviation": max(dense) if dense else None,
    }
    return result


def _meanfield_start(cfg: MeanFieldRun, dims: Tuple[int, ...]) -> QuantumState:
    p = cfg.params
    if len(dims) == 1:
        return product_state(p.psi_q.vector())
    qp = p.psi_qp if p.psi_qp is not None else p.psi_q
    return product_state(p.psi_q.vector(), qp.vector())


def run_meanfield(cfg: MeanFieldRun, jobs: int = 1) -> ScenarioResult:
    p = cfg.params
    extra = {} if p.hamiltonian in UNCOUPLED_HAMILTONIANS else {"coupling": p.coupling}
    h = build_hamiltonian(
        p.hamiltonian,
        np.random.default_rng(cfg.seed),
        kinetic=p.kinetic,
        mass=p.mass,
        omega=p.omega,
        **extra,
    )
    psi0 = _meanfield_start(cfg, h.dims)
    s0 = MeanFieldState(psi0, [p.x0], [p.k0])
    e0 = mean_hamiltonian(h, s0)
    result = ScenarioResult()

    if len(h.dims) == 2:
        report = factorization_check(
            h, s0, p.t_end, p.dt,
            require_split=p.expect_factorization,
            sample_every=p.sample_every,
            hbar=cfg.hbar,
        )
        traj = report.trajectory
        if p.expect_factorization:
            result.checks.append(check("factorization", report.max_violation, "<=", cfg.tol("factorization")))
        else:
            result.checks.append(check("negative_control_entangles", report.max_violation, ">",
                                       cfg.tol("negative_control_min")))
        violation = report.max_violation
    else:
        traj = evolve(h, s0, p.t_end, p.dt, sample_every=p.sample_every, hbar=cfg.hbar)
        violation = 0.0

    energies = [mean_hamiltonian(h, s) for s in traj.states]
    energy_drift = max(abs(e - e0) for e in energies)
    result.checks += [
        check("energy_conserved", energy_drift, "<=", cfg.tol("energy_drift") * (1 + abs(e0))),
        check("norm_conserved", traj.max_norm_drift, "<=", cfg.tol("norm_drift")),
    ]

    if p.witness is not None:
        w = p.witness
        dims = h.dims
        fid = nonlinearity_witness(
            h,
            QuantumState.basis(dims, w.psi0_index),
            QuantumState.basis(dims, w.phi0_index),
            [w.x0], [w.k0], w.t_end, w.dt, hbar=cfg.hbar,
        )
        result.checks.append(check("nonlinearity_witness", fid, "<", cfg.tol("witness_fidelity_max")))
        result.summary["witness_fidelity"] = fid

    if p.richardson is not None:
        ratio = _richardson_ratio(h, s0, p.richardson.t_end, p.richardson.dt, cfg.hbar)
        result.checks.append(check("rk4_self_convergence", ratio, ">=", cfg.tol("richardson_min_ratio")))
        result.summary["richardson_ratio"] = ratio

    result.tables["trajectory"] = traj.to_frame(h)
    result.summary.update({
        "hamiltonian": p.hamiltonian,
        "max_purity_deficit": violation,
        "energy_drift": energy_drift,
        "max_norm_drift": traj.max_norm_drift,
        "final_x": float(traj.final.x[0]),
        "final_k": float(traj.final.k[0]),
    })
    return result


def _richardson_ratio(h, s0: MeanFieldState, t_end: float, dt: float, hbar: float) -> float:
    """‖y(dt) − y(dt/2)‖ / ‖y(dt/2) − y(dt/4)‖; close to 16 for a 4th-order scheme."""
    finals = []
    for step in (dt, dt / 2, dt / 4):
        s = evolve(h, s0, t_end, step, sample_every=10 ** 9, hbar=hbar).final
        finals.append(np.concatenate([s.psi.amplitudes, s.x, s.k]))
    coarse = np.linalg.norm(finals[0] - finals[1])
    fine = np.linalg.norm(finals[1] - finals[2])
    return float(coarse / fine) if fine > 0 else math.inf


def particle_scenario(p: ParticleParams, hbar: float = 1.0, **overrides) -> ParticleScenario:
    s = ParticleScenario(
        g1=p.g1,
        g2=p.g2,
        t=p.t,
        q_axis=p.q_axis.axis("q"),
        qp_axis=p.qp_axis.axis("qp"),
        x_axis=p.x_axis.axis("x"),
        psi_q=p.psi_q.factor(),
        psi_qp=p.psi_qp.factor(),
        psi_c=p.psi_c.factor(),
        hbar=hbar,
    )
    return replace(s, **overrides) if overrides else s


def _moment_gap(a: EnsembleState, b: EnsembleState, axis: str) -> float:
    ma, mb = marginal_moments(a, axis), marginal_moments(b, axis)
    return max(abs(ma[n] - mb[n]) for n in ma)


def run_particles(cfg: ParticleRun, jobs: int = 1) -> ScenarioResult:
    p = cfg.params
    s = particle_scenario(p, cfg.hbar)
    result = ScenarioResult()

    start = initial_state(s)
    state = propagate_particle(s)
    raw_total = float(s.density(*np.meshgrid(
        s.q_axis.points(), s.qp_axis.points(), s.x_axis.points(), indexing="ij", sparse=True
    )).sum()) * s.grid.weight
    residual = particle_pde_residual(s)
    e0, et = particle_energy(s, start), particle_energy(s, state)
    result.checks += [
        check("normalization", abs(raw_total - 1.0), "<=", cfg.tol("particle_norm")),
        check("pde_residual_P", residual["P"], "<=", cfg.tol("pde_residual")),
        check("pde_residual_S", residual["S"], "<=", cfg.tol("pde_residual")),
        check("energy_conserved", abs(et - e0), "<=", cfg.tol("energy_drift") * (1 + abs(e0))),
    ]

    post = postselect_x(s, p.a)
    ent = post.entanglement()
    refined = particle_scenario(
        p, cfg.hbar,
        q_axis=s.q_axis.refined(p.refined_points),
        qp_axis=s.qp_axis.refined(p.refined_points),
    )
    ent_fine = postselect_x(refined, p.a).entanglement()
    both_coupled = s.g1 != 0 and s.g2 != 0 and s.t > 0
    if both_coupled:
        rel = abs(ent.entropy - ent_fine.entropy) / max(ent_fine.entropy, 1e-300)
        result.checks += [
            check("postselected_entropy", ent.entropy, ">", cfg.tol("entropy_min")),
            check("entropy_refinement", rel, "<=", cfg.tol("entropy_refinement")),
        ]
    else:
        result.checks.append(check("postselected_product", ent.entropy, "<=", cfg.tol("control_entropy")))

    if p.controls:
        for label, over in (("g1_zero", {"g1": 0.0}), ("g2_zero", {"g2": 0.0})):
            control = replace(s, **over)
            c_ent = postselect_x(control, p.a).entanglement().entropy
            result.checks.append(check(f"control_{label}_entropy", c_ent, "<=", cfg.tol("control_entropy")))
            c_state = propagate_particle(control)
            c_start = initial_state(control)
            axis = "qp" if label == "g2_zero" else "q"
            result.checks.append(check(
                f"control_{label}_marginal_{axis}", _moment_gap(c_state, c_start, axis),
                "<=", cfg.tol("marginal_moments"),
            ))
            result.summary[f"control_{label}_entropy"] = c_ent

    slice_grid = ConfigurationGrid((s.q_axis, s.qp_axis))
    result.states["postselected"] = HybridWavefunction(slice_grid, post.psi, s.hbar).to_state()
    result.records["entanglement"] = {
        "scenario_id": cfg.name or "particles",
        "parameters": {"g1": s.g1, "g2": s.g2, "t": s.t, "a": post.a},
        "entropy": ent.entropy,
        "negativity": ent.negativity,
        "schmidt_values": list(ent.schmidt_values[:16]),
        "guards": {"truncation_defect": abs(raw_total - 1.0), "p_a": post.p_a},
    }
    result.summary.update({
        "entropy": ent.entropy,
        "entropy_refined": ent_fine.entropy,
        "negativity_postselected": ent.negativity,
        "p_a": post.p_a,
        "energy": et,
    })

    if p.mixture:
        mix = mixture_density(s, p.coarse_q.axis("q"), p.coarse_qp.axis("qp"), jobs=jobs)
        neg = mix.negativity
        result.checks += [
            check("mixture_trace", mix.trace_error, "<=", cfg.tol("mixture_trace")),
            check("mixture_probability_sum", mix.p_sum_defect, "<=", cfg.tol("mixture_probability")),
        ]
        result.summary["mixture_negativity"] = neg
        result.tables["mixture_p"] = pd.DataFrame({"a": mix.a_values, "p": mix.p})
    return result


def _operator(name: str) -> Operator:
    if name == "0":
        return Operator(HilbertSpace((2,)), np.zeros((2, 2)), hermitian=True)
    return pauli(name)


def general_scenario(p: GeneralParams, width: float, hbar: float = 1.0, t: Optional[float] = None) -> GeneralScenario:
    return GeneralScenario(
        M=_operator(p.M),
        N=_operator(p.N),
        c_axis=p.c_axis.axis("x", periodic=True),
        t=p.t if t is None else t,
        psi_q=QuantumState.from_vector(p.psi_q.vector()),
        psi_qp=QuantumState.from_vector(p.psi_qp.vector()),
        psi_c=GaussianFactor(p.c_mean, width),
        hbar=hbar,
    )


def run_general(cfg: GeneralRun, jobs: int = 1) -> ScenarioResult:
    p = cfg.params
    scenarios = [general_scenario(p, w, cfg.hbar) for w in p.widths]
    reports = _parallel_map(lambda s: general_report(s, p.a, oracle=p.oracle), scenarios, jobs)
    result = ScenarioResult()

    rows = []
    for r in reports:
        rows.append({
            "width": r.width,
            "t": r.t,
            "negativity": r.unconditional.negativity,
            "entropy_Q": r.unconditional.entropy,
            "conditional_negativity": r.conditional.negativity,
            "conditional_entropy": r.conditional.entropy,
            "ensemble_conditional_negativity": r.ensemble_conditional_negativity,
            "edge_mass": r.edge_mass,
            "direct_fidelity": r.direct_fidelity,
            "purity_Qp": r.purity_qp,
        })
    result.tables["widths"] = pd.DataFrame(rows)
    result.records["reports"] = [r.to_dict() for r in reports]

    if p.oracle:
        worst = min(r.direct_fidelity for r in reports)
        result.checks.append(check("bch_vs_direct", 1.0 - worst, "<=", cfg.tol("bch_infidelity")))
    references = None
    if p.conditional_reference:
        references = [conditional_reference(s, p.a).negativity for s in scenarios]
        worst = max(abs(r.conditional.negativity - ref) for r, ref in zip(reports, references))
        result.checks.append(check("conditional_reference", worst, "<=", cfg.tol("conditional_oracle")))
    ecn = [r.ensemble_conditional_negativity for r in reports]
    if p.require_monotone and len(ecn) > 1:
        steps = [b - a for a, b in zip(ecn, ecn[1:])]
        result.checks.append(check("conditional_negativity_increases", min(steps), ">", 0.0))
        result.checks.append(check("widest_conditional_negativity", ecn[-1], ">", cfg.tol("widest_negativity_min")))
    if p.expected_conditional is not None:
        worst = max(abs(r.conditional.negativity - p.expected_conditional) for r in reports)
        result.checks.append(check("conditional_oracle", worst, "<=", cfg.tol("conditional_oracle")))
    if p.expect_maximal_mn_entanglement:
        result.checks.append(check(
            "mn_factor_entropy", abs(_mn_factor_entropy(scenarios[0]) - math.log(2)),
            "<=", cfg.tol("conditional_oracle"),
        ))

    result.summary = {
        "widths": list(p.widths),
        "t": p.t,
        "negativity": reports[-1].unconditional.negativity,
        "conditional_negativity": reports[-1].conditional.negativity,
        "conditional_negativity_reference": references[-1] if references is not None else None,
        "ensemble_conditional_negativity": ecn[-1],
        "min_direct_fidelity": min(r.direct_fidelity for r in reports) if p.oracle else None,
    }
    return result


def _mn_factor_entropy(s: GeneralScenario) -> float:
    """Entropy produced by e^{it²MN/2ħ} alone on |ψ_Q⟩|ψ_Q'⟩."""
    return schmidt(mn_factor_state(s), Bipartition((0,), (1,))).entropy


def run_brackets(cfg: BracketRun, jobs: int = 1) -> ScenarioResult:
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    result = ScenarioResult()

    qb_worst = 0.0
    for levels in p.qb_levels:
        grid = qubit_grid(levels)
        for _ in range(p.qb_pairs):
            M = operator_on(random_hermitian(levels, rng))
            N = operator_on(random_hermitian(levels, rng))
            states = [random_discrete_state(grid, rng, cfg.hbar) for _ in range(p.qb_states)]
            qb_worst = max(qb_worst, verify_qb(M, N, states, hbar=cfg.hbar))
    result.checks.append(check("qb_isomorphism", qb_worst, "<=", cfg.tol("qb_deviation")))

    qubit = qubit_grid(2)
    probe = random_discrete_state(qubit, rng, cfg.hbar)
    qx = quantum_observable(operator_on(SIGMA_X), qubit, hbar=cfg.hbar, name="Q_sx")
    result.checks.append(check(
        "quantum_gradient_consistency", qx.check_gradient(probe, rng), "<=", cfg.tol("gradient_consistency")
    ))
    result.checks.append(check("extension_property", _extension_gap(rng, cfg.hbar), "<=", cfg.tol("extension")))

    specs = random_gaussian_specs(rng, p.cb_states)
    conv = _parallel_map(
        lambda pair: cb_convergence(pair[0], pair[1], specs, p.coarse, p.fine, p.bounds),
        list(p.cb_pairs),
        jobs,
    )
    min_order = cfg.tol("cb_min_order")
    rows = []
    for c in conv:
        ok = c.exact or (c.order is not None and c.order >= min_order)
        rows.append({**c.to_dict(), "passed": ok})
        result.checks.append(CheckResult(
            f"cb_{c.f}_{c.g}", ok, c.order if c.order is not None else "exact", min_order, ">="
        ))
    result.tables["cb_convergence"] = pd.DataFrame(rows)
    result.summary = {
        "qb_max_deviation": qb_worst,
        "cb_orders": {f"{c.f},{c.g}": c.order for c in conv},
    }
    return result


def _extension_gap(rng: np.random.Generator, hbar: float) -> float:
    """
    Brackets on a product grid (classical x, qubit) against their values on
    the factors, for a factorized state.
    """
    x_axis = ContinuousAxis("x", -5.0, 5.0, 65)
    c_grid = ConfigurationGrid((x_axis,))
    q_grid = qubit_grid(2)
    joint = ConfigurationGrid((x_axis, DiscreteAxis("s", 2)))

    c_state = gaussian_ensemble(c_grid, GaussianSpec(0.3, 1.1, 0.4, 0.3))
    q_state = random_discrete_state(q_grid, rng, hbar)
    P = c_state.P[:, None] * q_state.P[None, :]
    S = c_state.S[:, None] + q_state.S[None, :]
    j_state = EnsembleState.normalized(joint, P, S)

    def c_pair(grid, state):
        Cx = classical_observable(lambda x, k: x, grid, "x", "C_x")
        Ck = classical_observable(lambda x, k: k, grid, "x", "C_k")
        return poisson_bracket(Cx, Ck, state)

    def q_pair(grid, state):
        Qx = quantum_observable(operator_on(SIGMA_X), grid, ["s"], hbar, "Q_sx")
        Qy = quantum_observable(operator_on(SIGMA_Y), grid, ["s"], hbar, "Q_sy")
        return poisson_bracket(Qx, Qy, state)

    return max(
        abs(c_pair(joint, j_state) - c_pair(c_grid, c_state)),
        abs(q_pair(joint, j_state) - q_pair(q_grid, q_state)),
    )


RUNNERS: Dict[str, Callable[..., ScenarioResult]] = {
    Kind.KOOPMAN.value: run_koopman,
    Kind.MEANFIELD.value: run_meanfield,
    Kind.PARTICLES.value: run_particles,
    Kind.GENERAL.value: run_general,
    Kind.BRACKETS.value: run_brackets,
}


def execute(cfg: AnyRun, jobs: int = 1) -> Tuple[ScenarioResult, float]:
    """Run the kind's runner; returns the result and its wall time."""
    t0 = time.perf_counter()
    result = RUNNERS[cfg.kind](cfg, jobs=jobs)
    return result, time.perf_counter() - t0


def config_echo(cfg: AnyRun) -> Dict[str, Any]:
    """The validated config as reported; out_dir does not affect results."""
    return cfg.model_dump(mode="json", exclude={"out_dir"})


def config_hash(cfg: AnyRun) -> str:
    return content_hash(config_echo(cfg))


def build_report(cfg: AnyRun, result: ScenarioResult, wall_time_s: float) -> RunReport:
    config = config_echo(cfg)
    return RunReport(
        kind=cfg.kind,
        name=cfg.name,
        config=config,
        config_hash=content_hash(config),
        checks=list(result.checks),
        summary=result.summary,
        wall_time_s=wall_time_s,
    )
