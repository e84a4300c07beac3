"""
Koopman Hybrid Dynamics

Classical system embedded as a commuting operator family. The hybrid state
is block-diagonal over the classical spectrum:

    ρ_QQ'C = ⊕_c [ p(c) ρ_QQ'(c) ⊗ ρ_C(c) ]

and every admissible interaction acts as a direct sum of local unitaries.
Sectors are stored as explicit per-label factors, so no interaction can ever
couple Q to Q' inside a sector; the no-go result is structural here and the
dense block-diagonal oracle below checks that the factored representation
agrees with the full tensor-space simulation.

Channels beyond unitaries are reached by dilation: give ℋ_c a larger
dimension and use a unitary on it.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from qcmediator.errors import ArgumentError, ContractError, DomainError
from qcmediator.hilbert import (
    Bipartition,
    DensityOperator,
    HilbertSpace,
    Operator,
    negativity,
    partial_trace,
    purity,
    random_density,
    random_pure_state,
    random_unitary,
    tensor,
    von_neumann_entropy,
)

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-12
UNITARY_TOL = 1e-10
POSTSELECT_MIN_PROBABILITY = 1e-15

# Dense oracle is built only while the full matrix stays small
DENSE_ORACLE_MAX_DIM = 512

QQ_CUT = Bipartition((0,), (1,))


class Target(str, Enum):
    """Quantum subsystem a diagonal interaction couples to."""
    Q = "Q"
    QPRIME = "Q'"


class ScenarioMode(str, Enum):
    IDENTITY = "identity"
    RANDOM = "random"
    BELL = "bell"


@dataclass(frozen=True)
class ClassicalSpectrum:
    """Labels c of Ĉ = Σ c Π_c and the dimension of each sector ℋ_c."""
    labels: Tuple[float, ...]
    sector_dims: Tuple[int, ...]

    def __post_init__(self):
        labels = tuple(float(c) for c in self.labels)
        dims = tuple(int(d) for d in self.sector_dims)
        if not labels:
            raise ArgumentError("A classical spectrum needs at least one label")
        if len(set(labels)) != len(labels):
            raise ArgumentError(f"Classical labels must be distinct: {labels}")
        if len(dims) != len(labels) or any(d < 1 for d in dims):
            raise ArgumentError(f"Need one sector dimension >= 1 per label, got {dims}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sector_dims", dims)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def total_dim(self) -> int:
        return sum(self.sector_dims)

    def index(self, label: float) -> int:
        try:
            return self.labels.index(float(label))
        except ValueError:
            raise ArgumentError(f"Label {label!r} is not in the spectrum {self.labels}") from None

    def offsets(self) -> List[int]:
        return list(np.concatenate(([0], np.cumsum(self.sector_dims)[:-1])).astype(int))


@dataclass(frozen=True, eq=False)
class DiagonalHybridState:
    """Label distribution with one ρ_QQ' and one ρ_C per label."""
    spectrum: ClassicalSpectrum
    p: np.ndarray
    rho_qq: Tuple[DensityOperator, ...]
    rho_c: Tuple[DensityOperator, ...]

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(-1)
        n = self.spectrum.n_labels
        if p.size != n or len(self.rho_qq) != n or len(self.rho_c) != n:
            raise ArgumentError(f"Expected {n} probabilities and sector states")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROBABILITY_TOL:
            raise ContractError(f"Label probabilities must be nonnegative and sum to 1, got {p}")
        qq_space = self.rho_qq[0].space
        if qq_space.n_subsystems != 2:
            raise ArgumentError(f"Sector states live on ℋ_Q⊗ℋ_Q', got dims {qq_space.dims}")
        for rho, rc, d in zip(self.rho_qq, self.rho_c, self.spectrum.sector_dims):
            if rho.space.dims != qq_space.dims:
                raise ArgumentError("All sector states must share the same ℋ_Q⊗ℋ_Q'")
            if rc.space.total_dim != d:
                raise ArgumentError(f"Classical sector state has dim {rc.space.total_dim}, expected {d}")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "rho_qq", tuple(self.rho_qq))
        object.__setattr__(self, "rho_c", tuple(self.rho_c))

    @property
    def qq_dims(self) -> Tuple[int, ...]:
        return self.rho_qq[0].space.dims


@dataclass(frozen=True, eq=False)
class DiagonalInteraction:
    """⊕_c [U(c) ⊗ U_C(c)] with U(c) acting on the target subsystem only."""
    spectrum: ClassicalSpectrum
    u_q: Tuple[np.ndarray, ...]
    u_c: Tuple[np.ndarray, ...]
    target: Target = Target.Q

    def __post_init__(self):
        n = self.spectrum.n_labels
        if len(self.u_q) != n or len(self.u_c) != n:
            raise ArgumentError(f"Expected {n} unitaries per factor")
        u_q = tuple(np.asarray(u, dtype=complex) for u in self.u_q)
        u_c = tuple(np.asarray(u, dtype=complex) for u in self.u_c)
        for u, d in zip(u_c, self.spectrum.sector_dims):
            if u.shape != (d, d):
                raise ArgumentError(f"U_C has shape {u.shape}, sector dimension is {d}")
        for u in u_q + u_c:
            _check_unitary(u)
        object.__setattr__(self, "u_q", u_q)
        object.__setattr__(self, "u_c", u_c)
        object.__setattr__(self, "target", Target(self.target))

    @classmethod
    def identity(cls, spectrum: ClassicalSpectrum, d_target: int, target: Target = Target.Q):
        return cls(
            spectrum,
            tuple(np.eye(d_target) for _ in spectrum.labels),
            tuple(np.eye(d) for d in spectrum.sector_dims),
            target,
        )

    def local_unitary(self, i: int, qq_dims: Tuple[int, ...]) -> np.ndarray:
        """U(c_i) extended by the identity on the untargeted factor."""
        d_q, d_qp = qq_dims
        u = self.u_q[i]
        if self.target is Target.Q:
            if u.shape != (d_q, d_q):
                raise ArgumentError(f"U_Q has shape {u.shape}, ℋ_Q has dimension {d_q}")
            return np.kron(u, np.eye(d_qp))
        if u.shape != (d_qp, d_qp):
            raise ArgumentError(f"U_Q' has shape {u.shape}, ℋ_Q' has dimension {d_qp}")
        return np.kron(np.eye(d_q), u)


@dataclass(frozen=True)
class KoopmanReport:
    """Negativities before and after a Koopman scenario."""
    mode: str
    seed: int
    n_labels: int
    rounds: int
    initial_negativity: float
    final_negativity: float
    sector_negativity_initial: Tuple[float, ...]
    sector_negativity_final: Tuple[float, ...]
    postselected_negativity_max: float
    sector_entropy_drift: float
    probability_drift: float
    dense_max_deviation: Optional[float] = None

    @property
    def negativity_delta(self) -> float:
        return self.final_negativity - self.initial_negativity

    @property
    def sector_negativity_drift(self) -> float:
        return float(max(
            abs(a - b) for a, b in zip(self.sector_negativity_initial, self.sector_negativity_final)
        ))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "n_labels": self.n_labels,
            "rounds": self.rounds,
            "initial_negativity": self.initial_negativity,
            "final_negativity": self.final_negativity,
            "negativity_delta": self.negativity_delta,
            "sector_negativity_initial": list(self.sector_negativity_initial),
            "sector_negativity_final": list(self.sector_negativity_final),
            "sector_negativity_drift": self.sector_negativity_drift,
            "postselected_negativity_max": self.postselected_negativity_max,
            "sector_entropy_drift": self.sector_entropy_drift,
            "probability_drift": self.probability_drift,
            "dense_max_deviation": self.dense_max_deviation,
        }


def _check_unitary(u: np.ndarray) -> None:
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ArgumentError(f"Unitary must be square, got shape {u.shape}")
    defect = float(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))))
    if defect > UNITARY_TOL:
        raise ContractError(f"Matrix is not unitary (defect {defect:.3e})")


def _conjugate(u: np.ndarray, rho: DensityOperator) -> DensityOperator:
    m = u @ rho.matrix @ u.conj().T
    return DensityOperator(rho.space, (m + m.conj().T) / 2)


# ============================================================================
# Sector operations
# ============================================================================

def apply_interaction(state: DiagonalHybridState, u: DiagonalInteraction) -> DiagonalHybridState:
    """Conjugate every sector by its local unitary; p is untouched."""
    if u.spectrum != state.spectrum:
        raise ArgumentError("Interaction spectrum does not match the hybrid state")
    rho_qq = tuple(
        _conjugate(u.local_unitary(i, state.qq_dims), rho) for i, rho in enumerate(state.rho_qq)
    )
    rho_c = tuple(_conjugate(uc, rc) for uc, rc in zip(u.u_c, state.rho_c))
    return DiagonalHybridState(state.spectrum, state.p, rho_qq, rho_c)


def reduce_qq(state: DiagonalHybridState) -> DensityOperator:
    """Tr_C: the p-weighted mixture Σ_c p(c) ρ_QQ'(c)."""
    return DensityOperator.mixture(state.p, state.rho_qq)


def postselect_classical(state: DiagonalHybridState, label: float) -> DensityOperator:
    """ρ_QQ'(c) after observing the classical value c."""
    i = state.spectrum.index(label)
    if state.p[i] <= POSTSELECT_MIN_PROBABILITY:
        raise DomainError(f"Label {label!r} has probability {state.p[i]:.3e}; cannot post-select")
    return state.rho_qq[i]


def postselect_classical_set(state: DiagonalHybridState, labels: Sequence[float]) -> DensityOperator:
    """
    Post-select on a coarse-grained classical outcome.

    The outcome is a set of labels; the result is the renormalized mixture
    over that set.
    """
    idx = sorted({state.spectrum.index(c) for c in labels})
    if not idx:
        raise ArgumentError("Outcome set must contain at least one label")
    weight = float(state.p[idx].sum())
    if weight <= POSTSELECT_MIN_PROBABILITY:
        raise DomainError(f"Outcome {tuple(labels)} has probability {weight:.3e}; cannot post-select")
    return DensityOperator.mixture(state.p[idx] / weight, [state.rho_qq[i] for i in idx])


# ============================================================================
# Dense block-diagonal oracle
# ============================================================================

def _dense_space(state: DiagonalHybridState) -> HilbertSpace:
    return HilbertSpace(state.qq_dims + (state.spectrum.total_dim,))


def _embed_block(block: np.ndarray, offset: int, total: int) -> np.ndarray:
    out = np.zeros((total, total), dtype=complex)
    d = block.shape[0]
    out[offset:offset + d, offset:offset + d] = block
    return out


def to_dense(state: DiagonalHybridState) -> DensityOperator:
    """The direct sum ⊕_c p(c) ρ_QQ'(c) ⊗ ρ_C(c) on ℋ_Q⊗ℋ_Q'⊗(⊕_c ℋ_c)."""
    space = _dense_space(state)
    if space.total_dim > DENSE_ORACLE_MAX_DIM:
        raise ArgumentError(f"Dense oracle dimension {space.total_dim} exceeds {DENSE_ORACLE_MAX_DIM}")
    total_c = state.spectrum.total_dim
    matrix = sum(
        p * np.kron(rho.matrix, _embed_block(rc.matrix, off, total_c))
        for p, rho, rc, off in zip(state.p, state.rho_qq, state.rho_c, state.spectrum.offsets())
    )
    return DensityOperator(space, matrix)


def dense_interaction(u: DiagonalInteraction, state: DiagonalHybridState) -> Operator:
    """⊕_c [U(c) ⊗ U_C(c)] as one unitary on the full tensor space."""
    if u.spectrum != state.spectrum:
        raise ArgumentError("Interaction spectrum does not match the hybrid state")
    space = _dense_space(state)
    total_c = state.spectrum.total_dim
    matrix = sum(
        np.kron(u.local_unitary(i, state.qq_dims), _embed_block(uc, off, total_c))
        for i, (uc, off) in enumerate(zip(u.u_c, state.spectrum.offsets()))
    )
    return Operator(space, matrix)


def dense_apply(U: Operator, rho: DensityOperator) -> DensityOperator:
    m = U.matrix @ rho.matrix @ U.matrix.conj().T
    return DensityOperator(rho.space, (m + m.conj().T) / 2)


def dense_reduce_qq(rho: DensityOperator) -> DensityOperator:
    return partial_trace(rho, (0, 1))


def dense_sector(rho: DensityOperator, spectrum: ClassicalSpectrum, label: float) -> DensityOperator:
    """Project the dense state onto sector c, trace out C and renormalize."""
    i = spectrum.index(label)
    off = spectrum.offsets()[i]
    d_c = spectrum.sector_dims[i]
    d_qq = rho.space.total_dim // spectrum.total_dim
    t = rho.matrix.reshape(d_qq, spectrum.total_dim, d_qq, spectrum.total_dim)
    block = t[:, off:off + d_c, :, off:off + d_c]
    reduced = np.einsum("acbc->ab", block)
    weight = float(np.trace(reduced).real)
    if weight <= POSTSELECT_MIN_PROBABILITY:
        raise DomainError(f"Label {label!r} has probability {weight:.3e} in the dense state")
    return DensityOperator(HilbertSpace(rho.space.dims[:-1]), reduced / weight)


# ============================================================================
# Random scenarios
# ============================================================================

def random_hybrid_state(
    rng: np.random.Generator,
    n_labels: int = 2,
    qq_dims: Tuple[int, int] = (2, 2),
    sector_dim: int = 2,
    separable: bool = True,
    pure_sectors: bool = True,
) -> DiagonalHybridState:
    """
    Random block-diagonal state.

    Sector ρ_QQ' are products (separable=True) or random pure joint states.
    """
    spectrum = ClassicalSpectrum(tuple(range(n_labels)), (sector_dim,) * n_labels)
    p = rng.dirichlet(np.ones(n_labels))
    p = p / p.sum()
    rho_qq = []
    for _ in range(n_labels):
        if separable and pure_sectors:
            rho = tensor(random_pure_state((qq_dims[0],), rng), random_pure_state((qq_dims[1],), rng)).density()
        elif separable:
            rho = tensor(random_density((qq_dims[0],), rng), random_density((qq_dims[1],), rng))
        else:
            rho = random_pure_state(qq_dims, rng).density()
        rho_qq.append(rho)
    rho_c = tuple(random_density((sector_dim,), rng) for _ in range(n_labels))
    return DiagonalHybridState(spectrum, p, tuple(rho_qq), rho_c)


def bell_hybrid_state(rng: np.random.Generator, n_labels: int = 2, sector_dim: int = 2) -> DiagonalHybridState:
    """Every sector holds (|00⟩+|11⟩)/√2."""
    spectrum = ClassicalSpectrum(tuple(range(n_labels)), (sector_dim,) * n_labels)
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1 / np.sqrt(2)
    rho = DensityOperator(HilbertSpace((2, 2)), np.outer(bell, bell.conj()))
    p = rng.dirichlet(np.ones(n_labels))
    return DiagonalHybridState(
        spectrum,
        p / p.sum(),
        (rho,) * n_labels,
        tuple(random_density((sector_dim,), rng) for _ in range(n_labels)),
    )


def random_interaction(
    rng: np.random.Generator,
    spectrum: ClassicalSpectrum,
    d_target: int,
    target: Target = Target.Q,
) -> DiagonalInteraction:
    return DiagonalInteraction(
        spectrum,
        tuple(random_unitary(d_target, rng) for _ in spectrum.labels),
        tuple(random_unitary(d, rng) for d in spectrum.sector_dims),
        target,
    )


# ============================================================================
# Scenario runner
# ============================================================================

def _sector_entropies(state: DiagonalHybridState) -> List[Optional[float]]:
    out = []
    for rho in state.rho_qq:
        if purity(rho) > 1 - 1e-10:
            out.append(von_neumann_entropy(partial_trace(rho, (0,))))
        else:
            out.append(None)
    return out


def run_koopman_scenario(
    mode: ScenarioMode = ScenarioMode.RANDOM,
    n_labels: int = 2,
    qq_dims: Tuple[int, int] = (2, 2),
    sector_dim: int = 2,
    rounds: int = 1,
    seed: int = 0,
    dense_check: bool = True,
) -> KoopmanReport:
    """
    Build a hybrid state, apply alternating Q / Q' diagonal interactions and
    report negativities of every sector and of Tr_C.

    identity: random separable input, identity interactions.
    random:   random separable input, Haar-random diagonal interactions.
    bell:     Bell state in every sector, Haar-random diagonal interactions.
    """
    mode = ScenarioMode(mode)
    rng = np.random.default_rng(seed)
    qq_dims = tuple(qq_dims)

    if mode is ScenarioMode.BELL:
        if qq_dims != (2, 2):
            raise ArgumentError("bell mode needs qubit Q and Q'")
        state = bell_hybrid_state(rng, n_labels, sector_dim)
    else:
        state = random_hybrid_state(rng, n_labels, qq_dims, sector_dim, separable=True)
    initial = state

    dense = None
    if dense_check and qq_dims[0] * qq_dims[1] * n_labels * sector_dim <= DENSE_ORACLE_MAX_DIM:
        dense = to_dense(state)

    for r in range(rounds):
        target = Target.Q if r % 2 == 0 else Target.QPRIME
        d_target = qq_dims[0] if target is Target.Q else qq_dims[1]
        if mode is ScenarioMode.IDENTITY:
            u = DiagonalInteraction.identity(state.spectrum, d_target, target)
        else:
            u = random_interaction(rng, state.spectrum, d_target, target)
        state = apply_interaction(state, u)
        if dense is not None:
            dense = dense_apply(dense_interaction(u, initial), dense)

    dense_dev = None
    if dense is not None:
        dense_dev = float(np.max(np.abs(dense_reduce_qq(dense).matrix - reduce_qq(state).matrix)))
        for label, rho in zip(state.spectrum.labels, state.rho_qq):
            if state.p[state.spectrum.index(label)] > 1e-6:
                sector_dev = np.max(np.abs(dense_sector(dense, state.spectrum, label).matrix - rho.matrix))
                dense_dev = max(dense_dev, float(sector_dev))

    ent_before = _sector_entropies(initial)
    ent_after = _sector_entropies(state)
    drifts = [abs(a - b) for a, b in zip(ent_before, ent_after) if a is not None and b is not None]

    post = [
        negativity(postselect_classical(state, c), QQ_CUT)
        for c, pc in zip(state.spectrum.labels, state.p)
        if pc > POSTSELECT_MIN_PROBABILITY
    ]

    report = KoopmanReport(
        mode=mode.value,
        seed=int(seed),
        n_labels=n_labels,
        rounds=rounds,
        initial_negativity=negativity(reduce_qq(initial), QQ_CUT),
        final_negativity=negativity(reduce_qq(state), QQ_CUT),
        sector_negativity_initial=tuple(negativity(r, QQ_CUT) for r in initial.rho_qq),
        sector_negativity_final=tuple(negativity(r, QQ_CUT) for r in state.rho_qq),
        postselected_negativity_max=float(max(post)) if post else 0.0,
        sector_entropy_drift=float(max(drifts)) if drifts else 0.0,
        probability_drift=float(abs(state.p.sum() - 1.0)),
        dense_max_deviation=dense_dev,
    )
    logger.debug(f"koopman scenario seed={seed}: {report.to_dict()}")
    return report
