"""
Finite-Dimensional Hilbert Space Algebra

Dense state and operator algebra shared by every hybrid model:
- Tensor products with subsystem bookkeeping and a capacity limit
- Partial trace and partial transpose over arbitrary subsystem groups
- Hermitian time evolution (eigendecomposition or scaling-and-squaring)
- Schmidt decomposition, entanglement entropy, negativity, purity

Values are immutable after construction: arrays are copied and frozen.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from qcmediator.config import DEFAULT_CONFIG, resolve_hbar
from qcmediator.errors import ArgumentError, CapacityError, ContractError

logger = logging.getLogger(__name__)

# Singular values / eigenvalues below this are zero for rank and entropy
ZERO_FLOOR = 1e-12

STATE_NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-12
DENSITY_HERMITIAN_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-10
DENSITY_MIN_EIGENVALUE = -1e-8

# Largest dimension evolved through eigh; above this scipy's expm is used
EIGH_MAX_DIM = 1024


def _frozen(array: np.ndarray, dtype=complex) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of finite subsystems."""
    dims: Tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ArgumentError(f"Subsystem dimensions must be positive, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    def subspace(self, indices: Sequence[int]) -> "HilbertSpace":
        return HilbertSpace(tuple(self.dims[i] for i in indices))

    def join(self, other: "HilbertSpace") -> "HilbertSpace":
        """Tensor product space, refusing to exceed the configured capacity."""
        total = self.total_dim * other.total_dim
        if total > DEFAULT_CONFIG.max_total_dim:
            raise CapacityError(
                f"Tensor product dimension {total} exceeds max_total_dim "
                f"{DEFAULT_CONFIG.max_total_dim}",
                hint="reduce subsystem sizes or raise QCMEDIATOR_MAX_TOTAL_DIM",
            )
        return HilbertSpace(self.dims + other.dims)


@dataclass(frozen=True)
class Bipartition:
    """Split of the subsystem list into two nonempty groups."""
    left: Tuple[int, ...]
    right: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(int(i) for i in self.left))
        object.__setattr__(self, "right", tuple(int(i) for i in self.right))

    @classmethod
    def split(cls, n_subsystems: int, left: Sequence[int]) -> "Bipartition":
        left = tuple(left)
        right = tuple(i for i in range(n_subsystems) if i not in left)
        cut = cls(left, right)
        cut.validate(n_subsystems)
        return cut

    def validate(self, n_subsystems: int) -> None:
        if not self.left or not self.right:
            raise ArgumentError(f"Both sides of a bipartition must be nonempty: {self}")
        joined = sorted(self.left + self.right)
        if joined != list(range(n_subsystems)):
            raise ArgumentError(
                f"Bipartition {self} does not partition subsystems 0..{n_subsystems - 1}"
            )

    @property
    def order(self) -> Tuple[int, ...]:
        return self.left + self.right


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Normalized state vector on a tensor-product space."""
    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.space.total_dim:
            raise ArgumentError(
                f"State has {amps.size} amplitudes, space {self.space.dims} needs "
                f"{self.space.total_dim}"
            )
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > STATE_NORM_TOL:
            raise ContractError(
                f"State is not normalized (squared norm {norm2!r})",
                hint="use QuantumState.from_vector(..., normalize=True)",
            )
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_vector(
        cls,
        vector: Sequence[complex],
        dims: Optional[Sequence[int]] = None,
        normalize: bool = True,
    ) -> "QuantumState":
        vec = np.asarray(vector, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ArgumentError("Cannot normalize the zero vector")
            vec = vec / norm
        space = HilbertSpace(tuple(dims) if dims is not None else (vec.size,))
        return cls(space, vec)

    @classmethod
    def basis(cls, dims: Sequence[int], index: int) -> "QuantumState":
        space = HilbertSpace(tuple(dims))
        vec = np.zeros(space.total_dim, dtype=complex)
        vec[index] = 1.0
        return cls(space, vec)

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.space.dims

    def density(self) -> "DensityOperator":
        return DensityOperator(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class Operator:
    """Square matrix acting on a tensor-product space."""
    space: HilbertSpace
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = self.space.total_dim
        if mat.shape != (dim, dim):
            raise ArgumentError(f"Operator shape {mat.shape} does not match space {self.space.dims}")
        if self.hermitian:
            scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
            defect = float(np.max(np.abs(mat - mat.conj().T))) if mat.size else 0.0
            if defect > HERMITIAN_TOL * scale:
                raise ContractError(f"Operator flagged Hermitian deviates by {defect:.3e}")
        object.__setattr__(self, "matrix", _frozen(mat))

    @classmethod
    def from_matrix(
        cls,
        matrix: np.ndarray,
        dims: Optional[Sequence[int]] = None,
        hermitian: Optional[bool] = None,
    ) -> "Operator":
        """Wrap a matrix; Hermiticity is detected when not given."""
        mat = np.asarray(matrix, dtype=complex)
        space = HilbertSpace(tuple(dims) if dims is not None else (mat.shape[0],))
        if hermitian is None:
            scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
            hermitian = bool(np.max(np.abs(mat - mat.conj().T)) <= HERMITIAN_TOL * scale)
        return cls(space, mat, hermitian)

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "Operator":
        space = HilbertSpace(tuple(dims))
        return cls(space, np.eye(space.total_dim), True)

    def dagger(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, self.hermitian)

    def apply(self, psi: QuantumState) -> np.ndarray:
        _check_same_space(self.space, psi.space)
        return self.matrix @ psi.amplitudes

    def expectation(self, psi: QuantumState) -> Union[float, complex]:
        value = np.vdot(psi.amplitudes, self.apply(psi))
        return float(value.real) if self.hermitian else complex(value)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive semidefinite unit-trace operator."""
    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = self.space.total_dim
        if mat.shape != (dim, dim):
            raise ArgumentError(f"Density shape {mat.shape} does not match space {self.space.dims}")
        herm_defect = float(np.max(np.abs(mat - mat.conj().T)))
        if herm_defect > DENSITY_HERMITIAN_TOL:
            raise ContractError(f"Density operator is not Hermitian (defect {herm_defect:.3e})")
        trace = complex(np.trace(mat))
        if abs(trace - 1.0) > DENSITY_TRACE_TOL:
            raise ContractError(f"Density operator trace is {trace!r}, expected 1")
        min_eig = float(linalg.eigvalsh(mat, check_finite=False)[0])
        if min_eig < DENSITY_MIN_EIGENVALUE:
            raise ContractError(f"Density operator has negative eigenvalue {min_eig:.3e}")
        object.__setattr__(self, "matrix", _frozen(mat))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, dims: Optional[Sequence[int]] = None) -> "DensityOperator":
        mat = np.asarray(matrix, dtype=complex)
        return cls(HilbertSpace(tuple(dims) if dims is not None else (mat.shape[0],)), mat)

    @classmethod
    def mixture(cls, weights: Sequence[float], states: Sequence["DensityOperator"]) -> "DensityOperator":
        if len(weights) != len(states) or not states:
            raise ArgumentError("mixture needs one weight per state")
        space = states[0].space
        total = np.zeros_like(states[0].matrix)
        for w, rho in zip(weights, states):
            _check_same_space(space, rho.space)
            total = total + w * rho.matrix
        return cls(space, total)


@dataclass(frozen=True)
class EntanglementReport:
    """Entanglement figures for one bipartition."""
    schmidt_values: Tuple[float, ...]
    entropy: float
    negativity: float
    purity: float
    pure: bool = True
    cut: Tuple[Tuple[int, ...], Tuple[int, ...]] = field(default=((), ()))

    def to_dict(self) -> dict:
        return {
            "schmidt_values": [float(v) for v in self.schmidt_values],
            "entropy": float(self.entropy),
            "negativity": float(self.negativity),
            "purity": float(self.purity),
            "pure": self.pure,
            "cut": [list(self.cut[0]), list(self.cut[1])],
        }


# ============================================================================
# Pauli matrices
# ============================================================================

IDENTITY_2 = _frozen(np.eye(2))
SIGMA_X = _frozen([[0, 1], [1, 0]])
SIGMA_Y = _frozen([[0, -1j], [1j, 0]])
SIGMA_Z = _frozen([[1, 0], [0, -1]])

_PAULIS = {"i": IDENTITY_2, "x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def pauli(name: str) -> Operator:
    """Single-qubit Pauli operator by name ("x", "y", "z" or "i")."""
    try:
        return Operator(HilbertSpace((2,)), _PAULIS[name.lower()], True)
    except KeyError:
        raise ArgumentError(f"Unknown Pauli operator {name!r}") from None


# ============================================================================
# Core operations
# ============================================================================

def _check_same_space(a: HilbertSpace, b: HilbertSpace) -> None:
    if a.dims != b.dims:
        raise ArgumentError(f"Space mismatch: {a.dims} vs {b.dims}")


def _check_indices(indices: Sequence[int], n: int) -> Tuple[int, ...]:
    idx = tuple(sorted(set(int(i) for i in indices)))
    if not idx:
        raise ArgumentError("Subsystem index set must be nonempty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ArgumentError(f"Subsystem indices {tuple(indices)} out of range for {n} subsystems")
    return idx


def tensor(a, b):
    """Kronecker product of two states, operators or density operators."""
    if isinstance(a, QuantumState) and isinstance(b, QuantumState):
        return QuantumState(a.space.join(b.space), np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(a.space.join(b.space), np.kron(a.matrix, b.matrix))
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(a.space.join(b.space), np.kron(a.matrix, b.matrix), a.hermitian and b.hermitian)
    raise ArgumentError(f"Cannot tensor {type(a).__name__} with {type(b).__name__}")


def partial_trace(rho: DensityOperator, keep: Sequence[int]) -> DensityOperator:
    """
    Reduced density operator on the kept subsystems.

    Kept subsystems stay in their original relative order.
    """
    dims = rho.space.dims
    n = len(dims)
    keep = _check_indices(keep, n)
    traced = [i for i in range(n) if i not in keep]

    tensor_ = rho.matrix.reshape(dims + dims)
    # highest axis first so lower axis numbers stay valid
    for count, axis in enumerate(sorted(traced, reverse=True)):
        remaining = n - count
        tensor_ = np.trace(tensor_, axis1=axis, axis2=axis + remaining)

    kept_dims = tuple(dims[i] for i in keep)
    d = int(np.prod(kept_dims))
    return DensityOperator(HilbertSpace(kept_dims), tensor_.reshape(d, d))


def reduced_density(psi: QuantumState, keep: Sequence[int]) -> DensityOperator:
    """Reduced state of a pure state, without forming |ψ⟩⟨ψ|."""
    dims = psi.space.dims
    keep = _check_indices(keep, len(dims))
    rest = tuple(i for i in range(len(dims)) if i not in keep)
    kept_dims = tuple(dims[i] for i in keep)
    d = int(np.prod(kept_dims))
    amps = np.transpose(psi.amplitudes.reshape(dims), keep + rest).reshape(d, -1)
    return DensityOperator(HilbertSpace(kept_dims), amps @ amps.conj().T)


def permute_subsystems(rho: DensityOperator, order: Sequence[int]) -> DensityOperator:
    """Reorder tensor factors of a density operator."""
    dims = rho.space.dims
    n = len(dims)
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(n)):
        raise ArgumentError(f"{order} is not a permutation of {n} subsystems")
    t = rho.matrix.reshape(dims + dims)
    t = np.transpose(t, list(order) + [n + i for i in order])
    new_dims = tuple(dims[i] for i in order)
    d = rho.space.total_dim
    return DensityOperator(HilbertSpace(new_dims), t.reshape(d, d))


def partial_transpose(rho: DensityOperator, cut: Bipartition) -> np.ndarray:
    """
    Partial transpose on the right-hand group of a bipartition.

    Subsystems are first permuted into (left, right) order so that both
    groups are contiguous. The result is indexed in that permuted order.
    """
    dims = rho.space.dims
    cut.validate(len(dims))
    permuted = permute_subsystems(rho, cut.order)
    d_left = int(np.prod([dims[i] for i in cut.left]))
    d_right = int(np.prod([dims[i] for i in cut.right]))
    d = d_left * d_right
    return permuted.matrix.reshape(d_left, d_right, d_left, d_right).transpose(0, 3, 2, 1).reshape(d, d)


def negativity(rho: DensityOperator, cut: Bipartition) -> float:
    """(‖ρ^{T_B}‖₁ − 1)/2 from the eigenvalues of the partial transpose."""
    eigenvalues = linalg.eigvalsh(partial_transpose(rho, cut), check_finite=False)
    return max(0.0, float((np.sum(np.abs(eigenvalues)) - 1.0) / 2.0))


def expm_apply(
    H: Operator,
    t: float,
    psi: QuantumState,
    hbar: Optional[float] = None,
) -> QuantumState:
    """
    Return e^{-itH/ħ}|ψ⟩.

    Uses eigendecomposition up to EIGH_MAX_DIM, scaling-and-squaring above.
    """
    if not H.hermitian:
        raise ContractError(
            "expm_apply requires a Hermitian generator",
            hint="construct the Operator with hermitian=True",
        )
    _check_same_space(H.space, psi.space)
    if t == 0:
        return psi
    hbar = resolve_hbar(hbar)

    if H.space.total_dim <= EIGH_MAX_DIM:
        w, v = linalg.eigh(H.matrix, check_finite=False)
        out = v @ (np.exp(-1j * t * w / hbar) * (v.conj().T @ psi.amplitudes))
    else:
        logger.debug(f"expm_apply: dense scaling-and-squaring at dim {H.space.total_dim}")
        out = linalg.expm((-1j * t / hbar) * H.matrix) @ psi.amplitudes
    return QuantumState(psi.space, out)


def schmidt(psi: QuantumState, cut: Bipartition) -> EntanglementReport:
    """
    Schmidt spectrum and entanglement figures of a pure state.

    For pure states the partial-transpose spectrum is {λ_i², ±λ_iλ_j}, so the
    negativity reduces to ((Σλ)² − 1)/2.
    """
    dims = psi.space.dims
    cut.validate(len(dims))
    norm2 = float(np.vdot(psi.amplitudes, psi.amplitudes).real)
    if abs(norm2 - 1.0) > STATE_NORM_TOL:
        raise ContractError(f"schmidt requires a normalized state (squared norm {norm2!r})")

    d_left = int(np.prod([dims[i] for i in cut.left]))
    amps = np.transpose(psi.amplitudes.reshape(dims), cut.order).reshape(d_left, -1)
    lam = linalg.svdvals(amps, check_finite=False)
    lam = lam[lam > ZERO_FLOOR]
    probs = lam ** 2
    entropy = float(-np.sum(probs * np.log(probs)))
    neg = max(0.0, float((np.sum(lam) ** 2 - 1.0) / 2.0))
    return EntanglementReport(
        schmidt_values=tuple(float(v) for v in lam),
        entropy=max(0.0, entropy),
        negativity=neg,
        purity=float(np.sum(probs ** 2)),
        pure=True,
        cut=(cut.left, cut.right),
    )


def mixed_report(rho: DensityOperator, cut: Bipartition) -> EntanglementReport:
    """
    Entanglement figures for a mixed state.

    entropy and purity refer to the reduced state of the left group; only
    the negativity is an entanglement monotone here.
    """
    left = partial_trace(rho, cut.left)
    return EntanglementReport(
        schmidt_values=(),
        entropy=von_neumann_entropy(left),
        negativity=negativity(rho, cut),
        purity=purity(left),
        pure=False,
        cut=(cut.left, cut.right),
    )


# ============================================================================
# Scalar figures
# ============================================================================

def purity(rho: DensityOperator) -> float:
    return float(np.vdot(rho.matrix, rho.matrix).real)


def von_neumann_entropy(rho: DensityOperator) -> float:
    eigenvalues = linalg.eigvalsh(rho.matrix, check_finite=False)
    eigenvalues = eigenvalues[eigenvalues > ZERO_FLOOR]
    return max(0.0, float(-np.sum(eigenvalues * np.log(eigenvalues))))


def fidelity(psi: QuantumState, phi: QuantumState) -> float:
    """|⟨ψ|φ⟩| for pure states."""
    _check_same_space(psi.space, phi.space)
    return float(abs(np.vdot(psi.amplitudes, phi.amplitudes)))


# ============================================================================
# Seeded random constructions
# ============================================================================

def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a Ginibre matrix with phase correction)."""
    if dim == 1:
        return np.array([[np.exp(2j * np.pi * rng.uniform())]])
    return unitary_group.rvs(dim, random_state=rng)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (g + g.conj().T) / 2


def random_pure_state(dims: Sequence[int], rng: np.random.Generator) -> QuantumState:
    d = int(np.prod(dims))
    return QuantumState.from_vector(rng.normal(size=d) + 1j * rng.normal(size=d), dims)


def random_density(
    dims: Sequence[int],
    rng: np.random.Generator,
    rank: Optional[int] = None,
) -> DensityOperator:
    """Random density operator from a Ginibre matrix of the given rank."""
    d = int(np.prod(dims))
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return DensityOperator(HilbertSpace(tuple(dims)), rho / np.trace(rho).real)
