"""
Configuration-Ensemble Counterexamples

Two hybrid models in which a classical particle C does entangle two quantum
particles Q and Q':

Particle model. The ensemble Hamiltonian couples the momentum of Q to the
position of C and the momentum of C to the position of Q'. Its (P, S)
equations are solved exactly by a volume-preserving shear of the initial
data,

    F_t(q, q', x) = F_0(q − g1·t·x + ½·g1·g2·t²·q', q', x − g2·t·q'),

which is sampled on the grid. Post-selecting C at x = a leaves Q Q' in an
entangled pure state ψ_{t|a}; averaging over a gives the mixture ρ_QQ'|C.

General model. H = M ⊗ 1 ⊗ x̂ + 1 ⊗ N ⊗ k̂ on ℋ_Q ⊗ ℋ_Q' ⊗ (C grid),
evolved by the factorization

    e^{−it(x̂M + k̂N)/ħ} = e^{−itx̂M/ħ} e^{−itk̂N/ħ} e^{it²MN/(2ħ)}

and, independently, by one dense exponential on small grids.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from qcmediator.config import resolve_hbar
from qcmediator.errors import (
    ArgumentError,
    CapacityError,
    ContractError,
    DomainError,
    GridTooSmallError,
    WrapContaminationError,
)
from qcmediator.ensemble import ConfigurationGrid, ContinuousAxis, EnsembleState
from qcmediator.hilbert import (
    Bipartition,
    DensityOperator,
    EntanglementReport,
    HilbertSpace,
    Operator,
    QuantumState,
    expm_apply,
    fidelity,
    mixed_report,
    negativity,
    reduced_density,
    schmidt,
)

logger = logging.getLogger(__name__)

INTERIOR_MASS = 1 - 1e-6
TRUNCATION_DEFECT_MAX = 1e-4
SLICE_MIN_PROBABILITY = 1e-12
MIXTURE_MAX_DIM = 1024
DIRECT_MAX_DIM = 4096
WRAP_GUARD_CELLS = 3
WRAP_GUARD_MASS = 1e-10
PDE_STEP = 1e-4

QQ_CUT = Bipartition((0,), (1,))


@dataclass(frozen=True)
class GaussianFactor:
    """
    ψ(z) = (2πσ²)^{-1/4} exp(−(z−μ)²/(4σ²) + i·p·z/ħ).

    width σ is the standard deviation of |ψ|²; slope p is the mean momentum.
    """
    mean: float
    width: float
    slope: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise ArgumentError(f"Gaussian width must be positive, got {self.width}")

    def density(self, z) -> np.ndarray:
        return np.exp(-((z - self.mean) ** 2) / (2 * self.width ** 2)) / np.sqrt(2 * np.pi * self.width ** 2)

    def phase(self, z) -> np.ndarray:
        return self.slope * z

    def amplitude(self, z, hbar: float) -> np.ndarray:
        return np.sqrt(self.density(z)) * np.exp(1j * self.phase(z) / hbar)

    def interior_mass(self, lo: float, hi: float) -> float:
        return float(ndtr((hi - self.mean) / self.width) - ndtr((lo - self.mean) / self.width))


def _check_interior(factor: GaussianFactor, axis: ContinuousAxis, margin: float = 0.0) -> None:
    mass = factor.interior_mass(axis.min + margin, axis.max - margin)
    if mass < INTERIOR_MASS:
        raise GridTooSmallError(
            f"Axis {axis.name!r} holds only {mass:.9f} of the initial Gaussian "
            f"(mean {factor.mean}, width {factor.width})",
            hint=f"widen axis {axis.name!r}",
        )


# ============================================================================
# Particle model
# ============================================================================

@dataclass(frozen=True)
class ParticleScenario:
    g1: float
    g2: float
    t: float
    q_axis: ContinuousAxis
    qp_axis: ContinuousAxis
    x_axis: ContinuousAxis
    psi_q: GaussianFactor
    psi_qp: GaussianFactor
    psi_c: GaussianFactor
    hbar: float = 1.0

    def __post_init__(self):
        for factor, axis in ((self.psi_q, self.q_axis), (self.psi_qp, self.qp_axis), (self.psi_c, self.x_axis)):
            _check_interior(factor, axis)

    @property
    def grid(self) -> ConfigurationGrid:
        return ConfigurationGrid((self.q_axis, self.qp_axis, self.x_axis))

    def initial_arguments(self, q, qp, x, t: Optional[float] = None):
        """Arguments at which the initial data is evaluated to give time t."""
        t = self.t if t is None else t
        return q - self.g1 * t * x + 0.5 * self.g1 * self.g2 * t ** 2 * qp, qp, x - self.g2 * t * qp

    def density(self, q, qp, x, t: Optional[float] = None) -> np.ndarray:
        q0, qp0, x0 = self.initial_arguments(q, qp, x, t)
        return self.psi_q.density(q0) * self.psi_qp.density(qp0) * self.psi_c.density(x0)

    def phase(self, q, qp, x, t: Optional[float] = None) -> np.ndarray:
        q0, qp0, x0 = self.initial_arguments(q, qp, x, t)
        return self.psi_q.phase(q0) + self.psi_qp.phase(qp0) + self.psi_c.phase(x0)

    def amplitude(self, q, qp, x, t: Optional[float] = None) -> np.ndarray:
        return np.sqrt(self.density(q, qp, x, t)) * np.exp(1j * self.phase(q, qp, x, t) / self.hbar)


@dataclass(frozen=True, eq=False)
class PostSelection:
    """ψ_{t|a} on the (q, q') grid, normalized on the quadrature."""
    psi: np.ndarray
    K: float
    a: float
    a_index: int
    p_a: float
    dims: Tuple[int, int]
    weight: float

    def state(self) -> QuantumState:
        return QuantumState.from_vector(np.sqrt(self.weight) * self.psi.reshape(-1), self.dims)

    def entanglement(self) -> EntanglementReport:
        return schmidt(self.state(), QQ_CUT)


@dataclass(frozen=True, eq=False)
class MixtureResult:
    rho: DensityOperator
    p: np.ndarray
    a_values: np.ndarray
    p_sum_defect: float
    trace_error: float

    @property
    def negativity(self) -> float:
        return negativity(self.rho, QQ_CUT)


def _sparse_mesh(s: ParticleScenario):
    return np.meshgrid(s.q_axis.points(), s.qp_axis.points(), s.x_axis.points(), indexing="ij", sparse=True)


def propagate_particle(s: ParticleScenario) -> EnsembleState:
    """Sample the sheared initial data at time t and renormalize the quadrature."""
    q, qp, x = _sparse_mesh(s)
    grid = s.grid
    P = s.density(q, qp, x)
    S = np.broadcast_to(s.phase(q, qp, x), grid.shape)

    total = float(P.sum()) * grid.weight
    defect = abs(total - 1.0)
    if defect > TRUNCATION_DEFECT_MAX:
        axis = _leaking_axis(grid, P)
        raise GridTooSmallError(
            f"Propagated density lost {defect:.3e} of its mass through axis {axis!r}",
            hint=f"widen axis {axis!r}",
        )
    logger.debug(f"propagate_particle: truncation defect {defect:.3e}")
    return EnsembleState(grid, P / total, S)


def _leaking_axis(grid: ConfigurationGrid, P: np.ndarray) -> str:
    edge_mass = {}
    for i, axis in enumerate(grid.axes):
        edges = np.take(P, [0, -1], axis=i)
        edge_mass[axis.name] = float(edges.sum())
    return max(edge_mass, key=edge_mass.get)


def particle_pde_residual(s: ParticleScenario) -> Dict[str, float]:
    """
    Relative residual of ∂_t F = −g1·x·∂_q F − g2·q'·∂_x F for F = P and S on
    the closed-form solution, by centred differences of step 1e-4.
    """
    q, qp, x = _sparse_mesh(s)
    h = PDE_STEP
    out = {}
    for name, fn in (("P", s.density), ("S", s.phase)):
        dt = (fn(q, qp, x, s.t + h) - fn(q, qp, x, s.t - h)) / (2 * h)
        dq = (fn(q + h, qp, x) - fn(q - h, qp, x)) / (2 * h)
        dx = (fn(q, qp, x + h) - fn(q, qp, x - h)) / (2 * h)
        residual = dt + s.g1 * x * dq + s.g2 * qp * dx
        worst = float(np.max(np.abs(residual)))
        scale = float(np.max(np.abs(dt)))
        out[name] = worst / scale if scale > 0 else worst
    return out


def particle_energy(s: ParticleScenario, state: EnsembleState) -> float:
    """H[P, S] = g1 Σ w P x ∂_q S + g2 Σ w P q' ∂_x S."""
    grid = state.grid
    dS_q = np.gradient(state.S, s.q_axis.spacing, axis=0, edge_order=2)
    dS_x = np.gradient(state.S, s.x_axis.spacing, axis=2, edge_order=2)
    x = grid.coordinate(2)
    qp = grid.coordinate(1)
    return float(grid.weight * np.sum(state.P * (s.g1 * x * dS_q + s.g2 * qp * dS_x)))


def initial_state(s: ParticleScenario) -> EnsembleState:
    q, qp, x = _sparse_mesh(s)
    P = s.density(q, qp, x, 0.0)
    S = np.broadcast_to(s.phase(q, qp, x, 0.0), s.grid.shape)
    return EnsembleState.normalized(s.grid, P, S)


def _slice_index(axis: ContinuousAxis, a: float) -> int:
    if not axis.min <= a <= axis.max:
        raise ArgumentError(f"a = {a} lies outside axis {axis.name!r} [{axis.min}, {axis.max}]")
    i = axis.nearest(a)
    if i == 0 or i == axis.n_points - 1:
        raise ArgumentError(f"a = {a} snaps to the boundary of axis {axis.name!r}")
    return i


def _conditional_wavefunction(
    s: ParticleScenario,
    a: float,
    q_points: np.ndarray,
    qp_points: np.ndarray,
) -> np.ndarray:
    q = q_points[:, None]
    qp = qp_points[None, :]
    t, hbar = s.t, s.hbar
    return (
        s.psi_q.amplitude(q - s.g1 * t * a + 0.5 * s.g1 * s.g2 * t ** 2 * qp, hbar)
        * s.psi_qp.amplitude(qp, hbar)
        * s.psi_c.amplitude(a - s.g2 * t * qp, hbar)
    )


def postselect_x(s: ParticleScenario, a: float) -> PostSelection:
    """Condition on C observed at the grid point nearest a."""
    i = _slice_index(s.x_axis, a)
    a_grid = float(s.x_axis.points()[i])
    w = s.q_axis.weight * s.qp_axis.weight
    raw = _conditional_wavefunction(s, a_grid, s.q_axis.points(), s.qp_axis.points())
    norm2 = float(np.sum(np.abs(raw) ** 2)) * w
    p_a = norm2 * s.x_axis.weight
    if p_a <= SLICE_MIN_PROBABILITY:
        raise DomainError(f"Slice x = {a_grid} has probability {p_a:.3e}; cannot post-select")
    K = 1.0 / np.sqrt(norm2)
    return PostSelection(
        psi=raw * K,
        K=float(K),
        a=a_grid,
        a_index=i,
        p_a=p_a,
        dims=(s.q_axis.n_points, s.qp_axis.n_points),
        weight=w,
    )


def mixture_density(
    s: ParticleScenario,
    coarse_q: ContinuousAxis,
    coarse_qp: ContinuousAxis,
    jobs: int = 1,
) -> MixtureResult:
    """
    ρ_QQ'|C = Σ_a p(a) |ψ_{t|a}⟩⟨ψ_{t|a}| over every x grid point.

    p(a) comes from the fine (q, q') quadrature times Δx; ψ_{t|a} is sampled
    on the coarse grids. Slices are independent and may run on `jobs`
    threads; the sum is assembled in grid order.
    """
    dim = coarse_q.n_points * coarse_qp.n_points
    if dim > MIXTURE_MAX_DIM:
        raise CapacityError(
            f"Mixture dimension {dim} exceeds {MIXTURE_MAX_DIM}",
            hint="use coarser (q, q') grids for mixture_density",
        )
    a_values = s.x_axis.points()
    fine_w = s.q_axis.weight * s.qp_axis.weight
    coarse_w = coarse_q.weight * coarse_qp.weight
    q_f, qp_f = s.q_axis.points(), s.qp_axis.points()
    q_c, qp_c = coarse_q.points(), coarse_qp.points()

    def slice_(a: float) -> Tuple[float, Optional[np.ndarray]]:
        fine = _conditional_wavefunction(s, a, q_f, qp_f)
        p_a = float(np.sum(np.abs(fine) ** 2)) * fine_w * s.x_axis.weight
        coarse = np.sqrt(coarse_w) * _conditional_wavefunction(s, a, q_c, qp_c).reshape(-1)
        norm = np.linalg.norm(coarse)
        if p_a <= 1e-15 or norm == 0:
            return p_a, None
        return p_a, coarse / norm

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            slices = list(pool.map(slice_, a_values))
    else:
        slices = [slice_(a) for a in a_values]

    p = np.array([pa for pa, _ in slices])
    p_sum_defect = abs(float(p.sum()) - 1.0)
    keep = [i for i, (_, v) in enumerate(slices) if v is not None]
    weights = p[keep] / p[keep].sum()
    V = np.array([slices[i][1] for i in keep])
    rho = (V.T * weights) @ V.conj()
    rho = (rho + rho.conj().T) / 2
    trace_error = abs(float(np.trace(rho).real) - 1.0)
    logger.debug(f"mixture_density: {len(keep)} slices, Σp defect {p_sum_defect:.3e}")

    return MixtureResult(
        rho=DensityOperator(HilbertSpace((coarse_q.n_points, coarse_qp.n_points)), rho),
        p=p,
        a_values=a_values,
        p_sum_defect=p_sum_defect,
        trace_error=trace_error,
    )


# ============================================================================
# General model
# ============================================================================

@dataclass(frozen=True)
class GeneralScenario:
    M: Operator
    N: Operator
    c_axis: ContinuousAxis
    t: float
    psi_q: QuantumState
    psi_qp: QuantumState
    psi_c: GaussianFactor
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.M.hermitian and self.N.hermitian):
            raise ContractError("M and N must be Hermitian")
        if self.M.space.total_dim != self.psi_q.space.total_dim:
            raise ArgumentError("M does not act on ψ_Q's space")
        if self.N.space.total_dim != self.psi_qp.space.total_dim:
            raise ArgumentError("N does not act on ψ_Q''s space")
        if not self.c_axis.periodic:
            raise ArgumentError("The C grid of the general model must be periodic")
        _check_interior(self.psi_c, self.c_axis, WRAP_GUARD_CELLS * self.c_axis.spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.psi_q.space.total_dim, self.psi_qp.space.total_dim, self.c_axis.n_points)

    def psi_c_vector(self) -> np.ndarray:
        v = np.sqrt(self.c_axis.weight) * self.psi_c.amplitude(self.c_axis.points(), self.hbar)
        return v / np.linalg.norm(v)

    def initial(self) -> QuantumState:
        amps = np.kron(np.kron(self.psi_q.amplitudes, self.psi_qp.amplitudes), self.psi_c_vector())
        return QuantumState.from_vector(amps, self.dims)

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.c_axis.n_points, d=self.c_axis.spacing)


def _edge_mass(psi: np.ndarray) -> float:
    n = psi.shape[-1]
    band = np.r_[0:WRAP_GUARD_CELLS, n - WRAP_GUARD_CELLS:n]
    return float(np.sum(np.abs(psi[..., band]) ** 2))


def mn_factor_state(s: GeneralScenario) -> QuantumState:
    """e^{it²MN/2ħ}|ψ_Q⟩|ψ_Q'⟩, the only factor that acts on Q and Q' jointly."""
    d_q, d_qp, _ = s.dims
    space = HilbertSpace((d_q, d_qp))
    qq = QuantumState.from_vector(np.kron(s.psi_q.amplitudes, s.psi_qp.amplitudes), space.dims)
    # e^{+it²MN/2ħ} = e^{-i·1·(−t²MN/2)/ħ}
    gen = Operator(space, -(s.t ** 2 / 2) * np.kron(s.M.matrix, s.N.matrix), hermitian=True)
    return expm_apply(gen, 1.0, qq, resolve_hbar(s.hbar))


def evolve_general_bch(s: GeneralScenario) -> QuantumState:
    """Apply e^{it²MN/2ħ}, then the N-conditioned translation, then the M-conditioned kick."""
    d_q, d_qp, n = s.dims
    hbar = resolve_hbar(s.hbar)
    psi = s.initial()
    if s.t == 0:
        return psi

    qq = mn_factor_state(s)
    amps = np.multiply.outer(qq.amplitudes.reshape(d_q, d_qp), s.psi_c_vector())

    nu, V = linalg.eigh(s.N.matrix)
    amps = np.einsum("ji,qjx->qix", V.conj(), amps)
    kappa = s.wavenumbers()
    shifted = np.fft.fft(amps, axis=2) * np.exp(-1j * np.outer(s.t * nu, kappa))[None, :, :]
    amps = np.fft.ifft(shifted, axis=2)
    amps = np.einsum("ij,qjx->qix", V, amps)

    mu, U = linalg.eigh(s.M.matrix)
    amps = np.einsum("ji,jpx->ipx", U.conj(), amps)
    amps = amps * np.exp(-1j * s.t * np.outer(mu, s.c_axis.points()) / hbar)[:, None, :]
    amps = np.einsum("ij,jpx->ipx", U, amps)

    edge = _edge_mass(amps)
    if edge > WRAP_GUARD_MASS:
        raise WrapContaminationError(
            f"{edge:.3e} of the evolved state lies within {WRAP_GUARD_CELLS} cells of the C-grid boundary",
            hint="enlarge the C grid or reduce t",
        )
    return QuantumState(HilbertSpace(s.dims), amps.reshape(-1))


def momentum_matrix(axis: ContinuousAxis, hbar: float = 1.0) -> np.ndarray:
    """Spectral k̂ = F† diag(ħκ) F on a periodic grid."""
    n = axis.n_points
    F = linalg.dft(n, scale="sqrtn")
    kappa = 2 * np.pi * np.fft.fftfreq(n, d=axis.spacing)
    K = F.conj().T @ (hbar * kappa[:, None] * F)
    return (K + K.conj().T) / 2


def evolve_general_direct(s: GeneralScenario) -> QuantumState:
    """Dense e^{−itH/ħ} with H = M⊗1⊗x̂ + 1⊗N⊗k̂; the oracle for the factorized path."""
    d_q, d_qp, n = s.dims
    total = d_q * d_qp * n
    if total > DIRECT_MAX_DIM:
        raise CapacityError(
            f"Direct oracle dimension {total} exceeds {DIRECT_MAX_DIM}",
            hint="use fewer C-grid points for the dense comparison",
        )
    hbar = resolve_hbar(s.hbar)
    X = np.diag(s.c_axis.points()).astype(complex)
    K = momentum_matrix(s.c_axis, hbar)
    H = np.kron(np.kron(s.M.matrix, np.eye(d_qp)), X) + np.kron(np.kron(np.eye(d_q), s.N.matrix), K)
    H = (H + H.conj().T) / 2
    return expm_apply(Operator(HilbertSpace(s.dims), H, hermitian=True), s.t, s.initial(), hbar)


def general_entanglement(s: GeneralScenario, psi_t: Optional[QuantumState] = None) -> EntanglementReport:
    """Negativity across Q|Q' of ρ_QQ' = Tr_C |ψ_t⟩⟨ψ_t|."""
    psi_t = evolve_general_bch(s) if psi_t is None else psi_t
    return mixed_report(reduced_density(psi_t, (0, 1)), QQ_CUT)


def conditional_entanglement(
    s: GeneralScenario,
    a: float,
    psi_t: Optional[QuantumState] = None,
) -> EntanglementReport:
    """Entanglement of the Q Q' state post-selected at the C-grid point nearest a."""
    psi_t = evolve_general_bch(s) if psi_t is None else psi_t
    i = _slice_index(s.c_axis, a)
    amps = psi_t.amplitudes.reshape(s.dims)[:, :, i]
    prob = float(np.vdot(amps, amps).real)
    if prob <= SLICE_MIN_PROBABILITY:
        raise DomainError(f"Slice x = {a} has probability {prob:.3e}; cannot post-select")
    return schmidt(QuantumState.from_vector(amps.reshape(-1), s.dims[:2]), QQ_CUT)


def conditional_reference(s: GeneralScenario, a: float) -> EntanglementReport:
    """
    Grid-free counterpart of conditional_entanglement.

    After post-selection at x = a the Q Q' state is, up to a local phase on Q,
    ψ_C(a − tN) e^{it²MN/2ħ}|ψ_Q⟩|ψ_Q'⟩, with ψ_C evaluated in closed form at
    the grid point nearest a. For M = N = σ_z, |+⟩|+⟩ and a = c_mean the
    negativity is |sin(t²/ħ)|/2.
    """
    d_q, d_qp, _ = s.dims
    x_a = s.c_axis.points()[_slice_index(s.c_axis, a)]
    nu, V = linalg.eigh(s.N.matrix)
    filter_ = (V * s.psi_c.amplitude(x_a - s.t * nu, resolve_hbar(s.hbar))) @ V.conj().T
    amps = np.kron(np.eye(d_q), filter_) @ mn_factor_state(s).amplitudes
    prob = float(np.vdot(amps, amps).real)
    if prob <= SLICE_MIN_PROBABILITY:
        raise DomainError(f"Slice x = {a} has probability {prob:.3e}; cannot post-select")
    return schmidt(QuantumState.from_vector(amps, (d_q, d_qp)), QQ_CUT)


def ensemble_conditional_negativity(s: GeneralScenario, psi_t: Optional[QuantumState] = None) -> float:
    """Σ_a p(a) N(ψ_{t|a}) over all C-grid points."""
    psi_t = evolve_general_bch(s) if psi_t is None else psi_t
    amps = psi_t.amplitudes.reshape(s.dims)
    total = 0.0
    for i in range(s.c_axis.n_points):
        slice_ = amps[:, :, i]
        p_a = float(np.vdot(slice_, slice_).real)
        if p_a <= 1e-15:
            continue
        report = schmidt(QuantumState.from_vector(slice_.reshape(-1), s.dims[:2]), QQ_CUT)
        total += p_a * report.negativity
    return total


@dataclass(frozen=True)
class GeneralReport:
    """Everything a general-model run measures."""
    width: float
    t: float
    unconditional: EntanglementReport
    conditional: EntanglementReport
    conditional_a: float
    ensemble_conditional_negativity: float
    edge_mass: float
    direct_fidelity: Optional[float] = None
    purity_qp: float = field(default=1.0)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "t": self.t,
            "unconditional": self.unconditional.to_dict(),
            "conditional": self.conditional.to_dict(),
            "conditional_a": self.conditional_a,
            "ensemble_conditional_negativity": self.ensemble_conditional_negativity,
            "edge_mass": self.edge_mass,
            "direct_fidelity": self.direct_fidelity,
            "purity_qp": self.purity_qp,
        }


def general_report(s: GeneralScenario, a: float = 0.0, oracle: bool = True) -> GeneralReport:
    psi_t = evolve_general_bch(s)
    direct = None
    if oracle:
        direct = fidelity(psi_t, evolve_general_direct(s))
    rho_qp = reduced_density(psi_t, (1,))
    return GeneralReport(
        width=s.psi_c.width,
        t=s.t,
        unconditional=general_entanglement(s, psi_t),
        conditional=conditional_entanglement(s, a, psi_t),
        conditional_a=a,
        ensemble_conditional_negativity=ensemble_conditional_negativity(s, psi_t),
        edge_mass=_edge_mass(psi_t.amplitudes.reshape(s.dims)),
        direct_fidelity=direct,
        purity_qp=float(np.vdot(rho_qp.matrix, rho_qp.matrix).real),
    )
