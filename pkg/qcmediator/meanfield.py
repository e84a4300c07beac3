"""
Mean-Field Hybrid Dynamics

A quantum state ψ evolves under Ĥ(x, k) while the classical point (x, k)
follows Hamilton's equations generated by the mean field ⟨ψ|Ĥ(x, k)|ψ⟩:

    dψ/dt = −(i/ħ) Ĥ(x, k) ψ
    dx/dt =  ⟨ψ|∇_k Ĥ|ψ⟩
    dk/dt = −⟨ψ|∇_x Ĥ|ψ⟩

The joint system is integrated with fixed-step RK4; ψ is renormalized after
every step and the pre-renormalization drift is tracked. For a separable
Ĥ = Ĥ_Q ⊗ 1 + 1 ⊗ Ĥ_Q' a product state stays a product, which
factorization_check monitors through the purity of ρ_Q.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from qcmediator.config import resolve_hbar
from qcmediator.errors import ArgumentError, ContractError, StepSizeError
from qcmediator.hilbert import (
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Z,
    HilbertSpace,
    Operator,
    QuantumState,
    fidelity,
)
from qcmediator.metrics import StructuredLogger

logger = logging.getLogger(__name__)

MAX_STEP_DRIFT = 1e-6
GRADIENT_FD_STEP = 1e-6
GRADIENT_TOL = 1e-6

MatrixFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
GradientFn = Callable[[np.ndarray, np.ndarray], Sequence[np.ndarray]]


@dataclass(frozen=True, eq=False)
class ParamHamiltonian:
    """
    Ĥ(x, k) on a fixed quantum space, with operator gradients.

    eval_fn returns the matrix; grad_x_fn / grad_k_fn return one matrix per
    classical degree of freedom. separable_split holds the two local parts
    when Ĥ = Ĥ_Q ⊗ 1 + 1 ⊗ Ĥ_Q'.
    """
    name: str
    dims: Tuple[int, ...]
    n_classical: int
    eval_fn: MatrixFn
    grad_x_fn: GradientFn
    grad_k_fn: GradientFn
    separable_split: Optional[Tuple["ParamHamiltonian", "ParamHamiltonian"]] = None

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(self.dims)

    def eval(self, x, k) -> Operator:
        return Operator(self.space, self.eval_fn(_vec(x), _vec(k)), hermitian=True)

    def grad_x(self, x, k) -> List[Operator]:
        return [Operator(self.space, g, hermitian=True) for g in self.grad_x_fn(_vec(x), _vec(k))]

    def grad_k(self, x, k) -> List[Operator]:
        return [Operator(self.space, g, hermitian=True) for g in self.grad_k_fn(_vec(x), _vec(k))]

    def check_gradients(self, rng: np.random.Generator, n_probes: int = 3) -> float:
        """
        Compare the operator gradients with central differences of eval at
        random probe points. Raises ContractError above tolerance.
        """
        worst = 0.0
        for _ in range(n_probes):
            x = rng.uniform(-2, 2, self.n_classical)
            k = rng.uniform(-2, 2, self.n_classical)
            scale = max(1.0, float(np.max(np.abs(self.eval_fn(x, k)))))
            for which, grads in (("x", self.grad_x_fn(x, k)), ("k", self.grad_k_fn(x, k))):
                for i, g in enumerate(grads):
                    e = np.zeros(self.n_classical)
                    e[i] = GRADIENT_FD_STEP
                    if which == "x":
                        fd = (self.eval_fn(x + e, k) - self.eval_fn(x - e, k)) / (2 * GRADIENT_FD_STEP)
                    else:
                        fd = (self.eval_fn(x, k + e) - self.eval_fn(x, k - e)) / (2 * GRADIENT_FD_STEP)
                    err = float(np.max(np.abs(fd - np.asarray(g))))
                    worst = max(worst, err / scale)
        if worst > GRADIENT_TOL:
            raise ContractError(
                f"Hamiltonian {self.name!r}: operator gradient disagrees with finite "
                f"differences by {worst:.3e}"
            )
        return worst


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    """Quantum state plus classical phase-space point at time t."""
    psi: QuantumState
    x: np.ndarray
    k: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = _vec(self.x).copy()
        k = _vec(self.k).copy()
        if x.shape != k.shape:
            raise ArgumentError(f"x and k must have the same length, got {x.shape} and {k.shape}")
        x.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of one run plus integrator diagnostics."""
    states: Tuple[MeanFieldState, ...]
    norms: Tuple[float, ...]
    dt: float
    n_steps: int
    max_norm_drift: float

    @property
    def final(self) -> MeanFieldState:
        return self.states[-1]

    def to_frame(self, h: ParamHamiltonian) -> pd.DataFrame:
        """Columns t, x0.., k0.., energy, norm, purity_Q."""
        rows: Dict[str, list] = {"t": []}
        n = h.n_classical
        for i in range(n):
            rows[f"x{i}"] = []
        for i in range(n):
            rows[f"k{i}"] = []
        rows["energy"] = []
        rows["norm"] = []
        rows["purity_Q"] = []
        for s, norm in zip(self.states, self.norms):
            rows["t"].append(s.t)
            for i in range(n):
                rows[f"x{i}"].append(float(s.x[i]))
                rows[f"k{i}"].append(float(s.k[i]))
            rows["energy"].append(mean_hamiltonian(h, s))
            rows["norm"].append(norm)
            rows["purity_Q"].append(_purity_q(s.psi))
        return pd.DataFrame(rows)


@dataclass(frozen=True)
class FactorizationReport:
    max_violation: float
    energy_drift: float
    max_norm_drift: float
    trajectory: Trajectory = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "energy_drift": self.energy_drift,
            "max_norm_drift": self.max_norm_drift,
            "n_steps": self.trajectory.n_steps,
            "dt": self.trajectory.dt,
        }


def _vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))


def _purity_q(psi: QuantumState) -> float:
    """Purity of the first subsystem's reduced state (1 for a single factor)."""
    dims = psi.space.dims
    if len(dims) < 2:
        return 1.0
    a = psi.amplitudes.reshape(dims[0], -1)
    rho = a @ a.conj().T
    return float(np.vdot(rho, rho).real)


# ============================================================================
# Dynamics
# ============================================================================

def mean_hamiltonian(h: ParamHamiltonian, s: MeanFieldState) -> float:
    """H̄(x, k) = ⟨ψ|Ĥ(x, k)|ψ⟩."""
    return h.eval(s.x, s.k).expectation(s.psi)


def _raw_derivative(h, psi, x, k, hbar):
    H = np.asarray(h.eval_fn(x, k))
    dpsi = (-1j / hbar) * (H @ psi)
    dx = np.array([np.vdot(psi, g @ psi).real for g in h.grad_k_fn(x, k)])
    dk = np.array([-np.vdot(psi, g @ psi).real for g in h.grad_x_fn(x, k)])
    return dpsi, dx, dk


def derivative(
    h: ParamHamiltonian,
    s: MeanFieldState,
    hbar: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(dψ/dt, dx/dt, dk/dt) at a state; gradients taken at fixed ψ."""
    _check_state(h, s)
    return _raw_derivative(h, s.psi.amplitudes, s.x, s.k, resolve_hbar(hbar))


def split_derivative(
    h: ParamHamiltonian,
    s: MeanFieldState,
    hbar: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Coupled trajectory equations for a separable Ĥ from the two local factors.

    Each factor evolves under its own Ĥ_Q(x, k) or Ĥ_Q'(x, k); the classical
    point is driven by the sum of the two local mean fields. Requires a
    product state; agrees with derivative there.
    """
    if h.separable_split is None:
        raise ArgumentError(f"Hamiltonian {h.name!r} has no separable split")
    _check_state(h, s)
    hbar = resolve_hbar(hbar)
    psi_q, psi_qp = _product_factors(s.psi)
    h_q, h_qp = h.separable_split

    dq, dx_q, dk_q = _raw_derivative(h_q, psi_q, s.x, s.k, hbar)
    dqp, dx_qp, dk_qp = _raw_derivative(h_qp, psi_qp, s.x, s.k, hbar)
    dpsi = np.kron(dq, psi_qp) + np.kron(psi_q, dqp)
    return dpsi, dx_q + dx_qp, dk_q + dk_qp


def _product_factors(psi: QuantumState) -> Tuple[np.ndarray, np.ndarray]:
    dims = psi.space.dims
    if len(dims) != 2:
        raise ArgumentError(f"Expected a bipartite state, got dims {dims}")
    u, sv, vh = linalg.svd(psi.amplitudes.reshape(dims), full_matrices=False)
    if len(sv) > 1 and sv[1] > 1e-8:
        raise ArgumentError(f"State is not a product (second Schmidt value {sv[1]:.3e})")
    # global phase goes to the first factor
    return u[:, 0] * sv[0], vh[0].copy()


def _check_state(h: ParamHamiltonian, s: MeanFieldState) -> None:
    if s.psi.space.dims != h.dims:
        raise ArgumentError(f"State dims {s.psi.space.dims} do not match Hamiltonian dims {h.dims}")
    if s.x.size != h.n_classical:
        raise ArgumentError(f"Hamiltonian has {h.n_classical} classical coordinates, state has {s.x.size}")


def evolve(
    h: ParamHamiltonian,
    s0: MeanFieldState,
    t_end: float,
    dt: float,
    sample_every: int = 1,
    hbar: Optional[float] = None,
    events: Optional[StructuredLogger] = None,
) -> Trajectory:
    """
    Fixed-step RK4 on (ψ, x, k) from s0.t to t_end.

    dt is shortened so that an integer number of steps lands on t_end. States
    are sampled every `sample_every` steps; the final state is always kept.
    """
    _check_state(h, s0)
    if not dt > 0:
        raise ArgumentError(f"dt must be positive, got {dt}")
    if t_end < s0.t:
        raise ArgumentError(f"t_end {t_end} precedes the initial time {s0.t}")
    if sample_every < 1:
        raise ArgumentError(f"sample_every must be >= 1, got {sample_every}")
    hbar = resolve_hbar(hbar)

    span = t_end - s0.t
    n_steps = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0
    h_step = span / n_steps if n_steps else 0.0

    psi = s0.psi.amplitudes.copy()
    x = s0.x.copy()
    k = s0.k.copy()
    states = [s0]
    norms = [1.0]
    worst_drift, worst_step = 0.0, 0

    for step in range(1, n_steps + 1):
        k1 = _raw_derivative(h, psi, x, k, hbar)
        k2 = _raw_derivative(h, psi + h_step / 2 * k1[0], x + h_step / 2 * k1[1], k + h_step / 2 * k1[2], hbar)
        k3 = _raw_derivative(h, psi + h_step / 2 * k2[0], x + h_step / 2 * k2[1], k + h_step / 2 * k2[2], hbar)
        k4 = _raw_derivative(h, psi + h_step * k3[0], x + h_step * k3[1], k + h_step * k3[2], hbar)
        psi = psi + h_step / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        x = x + h_step / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        k = k + h_step / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])

        norm = float(np.linalg.norm(psi))
        drift = abs(norm - 1.0)
        if drift > MAX_STEP_DRIFT:
            raise StepSizeError(
                f"Norm drift {drift:.3e} at step {step} (t={s0.t + step * h_step:.6g}) "
                f"exceeds {MAX_STEP_DRIFT}",
                hint=f"reduce dt below {h_step:.3g}",
            )
        if drift > worst_drift:
            worst_drift, worst_step = drift, step
        psi = psi / norm

        if step % sample_every == 0 or step == n_steps:
            t = s0.t + step * h_step if step < n_steps else float(t_end)
            states.append(MeanFieldState(QuantumState(s0.psi.space, psi), x, k, t))
            norms.append(norm)

    logger.debug(f"evolve {h.name}: {n_steps} steps, max norm drift {worst_drift:.3e}")
    if events is not None and n_steps:
        events.log_drift(worst_step, s0.t + worst_step * h_step, worst_drift)
    return Trajectory(tuple(states), tuple(norms), h_step, n_steps, worst_drift)


def factorization_check(
    h: ParamHamiltonian,
    s0: MeanFieldState,
    t_end: float,
    dt: float,
    require_split: bool = True,
    sample_every: int = 1,
    hbar: Optional[float] = None,
) -> FactorizationReport:
    """
    Largest 1 − purity(ρ_Q) along the trajectory from a product start.

    With require_split=False the same monitor runs on a Hamiltonian without
    a separable split (the negative control).
    """
    if require_split and h.separable_split is None:
        raise ArgumentError(
            f"Hamiltonian {h.name!r} has no separable split",
            hint="pass require_split=False to run it as a negative control",
        )
    if len(h.dims) != 2:
        raise ArgumentError(f"factorization_check needs a bipartite space, got dims {h.dims}")
    if 1.0 - _purity_q(s0.psi) > 1e-12:
        raise ArgumentError("Initial state must be a product ψ_Q ⊗ ψ_Q'")

    traj = evolve(h, s0, t_end, dt, sample_every=sample_every, hbar=hbar)
    violation = max(1.0 - _purity_q(s.psi) for s in traj.states)
    e0 = mean_hamiltonian(h, traj.states[0])
    energy_drift = max(abs(mean_hamiltonian(h, s) - e0) for s in traj.states)
    return FactorizationReport(
        max_violation=max(0.0, float(violation)),
        energy_drift=float(energy_drift),
        max_norm_drift=traj.max_norm_drift,
        trajectory=traj,
    )


def nonlinearity_witness(
    h: ParamHamiltonian,
    psi0: QuantumState,
    phi0: QuantumState,
    x0,
    k0,
    t_end: float,
    dt: float,
    hbar: Optional[float] = None,
) -> float:
    """
    Fidelity between evolving the normalized sum ψ₀+φ₀ and summing the two
    separately evolved states. 1 for linear dynamics.
    """
    def run(psi: QuantumState) -> QuantumState:
        start = MeanFieldState(psi, x0, k0)
        return evolve(h, start, t_end, dt, sample_every=max(1, int(t_end / dt) + 1), hbar=hbar).final.psi

    psi_t = run(psi0)
    phi_t = run(phi0)
    summed = QuantumState.from_vector(psi_t.amplitudes + phi_t.amplitudes, psi0.space.dims)
    together = run(QuantumState.from_vector(psi0.amplitudes + phi0.amplitudes, psi0.space.dims))
    return fidelity(summed, together)


# ============================================================================
# Hamiltonian registry
# ============================================================================

def _constant(matrix: np.ndarray, n: int = 1) -> Tuple[MatrixFn, GradientFn, GradientFn]:
    zero = np.zeros_like(matrix)
    return (lambda x, k: matrix), (lambda x, k: [zero] * n), (lambda x, k: [zero] * n)


def _with_kinetic(
    name: str,
    dims: Tuple[int, ...],
    eval_fn: MatrixFn,
    grad_x_fn: GradientFn,
    grad_k_fn: GradientFn,
    kinetic: bool,
    mass: float,
    omega: float,
    split=None,
) -> ParamHamiltonian:
    """Optionally add (k²/2m + mω²x²/2)·1 to a one-dimensional Ĥ(x, k)."""
    if not kinetic:
        return ParamHamiltonian(name, dims, 1, eval_fn, grad_x_fn, grad_k_fn, split)
    if not mass > 0:
        raise ArgumentError(f"mass must be positive, got {mass}")
    eye = np.eye(int(np.prod(dims)))

    def ev(x, k):
        return eval_fn(x, k) + (k[0] ** 2 / (2 * mass) + mass * omega ** 2 * x[0] ** 2 / 2) * eye

    def gx(x, k):
        return [g + mass * omega ** 2 * x[0] * eye for g in grad_x_fn(x, k)]

    def gk(x, k):
        return [g + k[0] / mass * eye for g in grad_k_fn(x, k)]

    if split is not None:
        h_q, h_qp = split
        h_q = _with_kinetic(h_q.name, h_q.dims, h_q.eval_fn, h_q.grad_x_fn, h_q.grad_k_fn, True, mass, omega)
        split = (h_q, h_qp)
    return ParamHamiltonian(name, dims, 1, ev, gx, gk, split)


def zero_hamiltonian(dims: Tuple[int, ...] = (2, 2), **kinetic) -> ParamHamiltonian:
    ev, gx, gk = _constant(np.zeros((int(np.prod(dims)),) * 2, dtype=complex))
    split = None
    if len(dims) == 2:
        parts = []
        for d in dims:
            pe, pgx, pgk = _constant(np.zeros((d, d), dtype=complex))
            parts.append(ParamHamiltonian("zero", (d,), 1, pe, pgx, pgk))
        split = tuple(parts)
    return _with_kinetic("zero", tuple(dims), ev, gx, gk, split=split, **_kinetic_args(kinetic))


def constant_sigma_z(**kinetic) -> ParamHamiltonian:
    ev, gx, gk = _constant(SIGMA_Z.astype(complex))
    return _with_kinetic("constant-sigma-z", (2,), ev, gx, gk, **_kinetic_args(kinetic))


def single_qubit_linear(coupling: float = 1.0, **kinetic) -> ParamHamiltonian:
    """Ĥ(x) = g·x σ_z."""
    sz = coupling * SIGMA_Z
    zero = np.zeros((2, 2), dtype=complex)
    return _with_kinetic(
        "single-qubit-linear", (2,),
        lambda x, k: x[0] * sz,
        lambda x, k: [sz],
        lambda x, k: [zero],
        **_kinetic_args(kinetic),
    )


def linear_coupling(coupling: float = 1.0, **kinetic) -> ParamHamiltonian:
    """Ĥ(x, k) = g(x σ_z ⊗ 1 + k 1 ⊗ σ_x), separable."""
    sz1 = coupling * np.kron(SIGMA_Z, IDENTITY_2)
    sx2 = coupling * np.kron(IDENTITY_2, SIGMA_X)
    z2 = np.zeros((2, 2), dtype=complex)
    h_q = ParamHamiltonian(
        "linear-coupling:Q", (2,), 1,
        lambda x, k: coupling * x[0] * SIGMA_Z,
        lambda x, k: [coupling * SIGMA_Z],
        lambda x, k: [z2],
    )
    h_qp = ParamHamiltonian(
        "linear-coupling:Q'", (2,), 1,
        lambda x, k: coupling * k[0] * SIGMA_X,
        lambda x, k: [z2],
        lambda x, k: [coupling * SIGMA_X],
    )
    return _with_kinetic(
        "linear-coupling", (2, 2),
        lambda x, k: x[0] * sz1 + k[0] * sx2,
        lambda x, k: [sz1],
        lambda x, k: [sx2],
        split=(h_q, h_qp),
        **_kinetic_args(kinetic),
    )


def negative_control(coupling: float = 1.0, **kinetic) -> ParamHamiltonian:
    """Ĥ(x) = g·x σ_z ⊗ σ_z; not of separable form."""
    zz = coupling * np.kron(SIGMA_Z, SIGMA_Z)
    zero = np.zeros((4, 4), dtype=complex)
    return _with_kinetic(
        "negative-control", (2, 2),
        lambda x, k: x[0] * zz,
        lambda x, k: [zz],
        lambda x, k: [zero],
        **_kinetic_args(kinetic),
    )


def _kinetic_args(kwargs: dict) -> dict:
    allowed = {"kinetic", "mass", "omega"}
    unknown = set(kwargs) - allowed
    if unknown:
        raise ArgumentError(f"Unknown Hamiltonian parameters: {sorted(unknown)}")
    return {
        "kinetic": bool(kwargs.get("kinetic", False)),
        "mass": float(kwargs.get("mass", 1.0)),
        "omega": float(kwargs.get("omega", 0.0)),
    }


HAMILTONIAN_REGISTRY: Dict[str, Callable[..., ParamHamiltonian]] = {
    "zero": zero_hamiltonian,
    "constant-sigma-z": constant_sigma_z,
    "single-qubit-linear": single_qubit_linear,
    "linear-coupling": linear_coupling,
    "negative-control": negative_control,
}


def build_hamiltonian(
    name: str,
    rng: Optional[np.random.Generator] = None,
    **params,
) -> ParamHamiltonian:
    """Look up a registry builder and cross-check its gradients."""
    try:
        builder = HAMILTONIAN_REGISTRY[name]
    except KeyError:
        raise ArgumentError(
            f"Unknown Hamiltonian {name!r}",
            hint=f"choose one of {sorted(HAMILTONIAN_REGISTRY)}",
        ) from None
    h = builder(**params)
    h.check_gradients(rng if rng is not None else np.random.default_rng(0))
    return h


def qubit_state(theta: float, phase: float = 0.0) -> np.ndarray:
    """cos θ|0⟩ + e^{iφ} sin θ|1⟩."""
    return np.array([np.cos(theta), np.exp(1j * phase) * np.sin(theta)], dtype=complex)


def product_state(*factors: np.ndarray) -> QuantumState:
    vec = np.array([1.0], dtype=complex)
    for f in factors:
        vec = np.kron(vec, f)
    return QuantumState.from_vector(vec, tuple(len(f) for f in factors))
