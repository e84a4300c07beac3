"""
Configuration-Space Ensembles

Discretized (P, S) ensembles on a configuration grid and the observable
algebra they carry:
- Grids built from continuous (uniform, optionally periodic) and discrete axes
- Classical observables C_f = Σ w P f(x, ∇S)
- Quantum observables Q_M = ⟨ψ̃|M|ψ̃⟩ with ψ̃ = √(wP) e^{iS/ħ}
- The ensemble Poisson bracket and numerical checks of the two isomorphisms
  {C_f, C_g} = C_{f,g} and {Q_M, Q_N} = Q_{[M,N]/iħ}

Functional derivatives are weight-corrected, δF/δP(z) = (∂F/∂P_z)/w, so the
discrete bracket Σ w (δA/δP δB/δS − δA/δS δB/δP) approximates the continuum
one. Gradients of P are undefined at nodes, so scenarios keep P > 0.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.signal import convolve2d

from qcmediator.config import resolve_hbar
from qcmediator.errors import ArgumentError, ContractError, DomainError, EvaluationError
from qcmediator.hilbert import HilbertSpace, Operator, QuantumState

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-8
P_THRESHOLD = 1e-14
FD_RELATIVE_STEP = 1e-6

# Bracket deviations below this are finite-difference noise
CB_NOISE_FLOOR = 1e-7
CB_MIN_ORDER = 1.9


# ============================================================================
# Grids
# ============================================================================

@dataclass(frozen=True)
class ContinuousAxis:
    """
    Uniform axis on [min, max].

    Non-periodic axes include both endpoints; periodic axes drop the right
    endpoint so that n_points cells tile the period.
    """
    name: str
    min: float
    max: float
    n_points: int
    periodic: bool = False

    def __post_init__(self):
        if self.n_points < 4:
            raise ArgumentError(f"Axis {self.name!r} needs at least 4 points, got {self.n_points}")
        if not self.max > self.min:
            raise ArgumentError(f"Axis {self.name!r} has empty range [{self.min}, {self.max}]")

    @property
    def spacing(self) -> float:
        cells = self.n_points if self.periodic else self.n_points - 1
        return (self.max - self.min) / cells

    @property
    def weight(self) -> float:
        return self.spacing

    @property
    def size(self) -> int:
        return self.n_points

    def points(self) -> np.ndarray:
        return self.min + self.spacing * np.arange(self.n_points)

    def nearest(self, value: float) -> int:
        return int(np.clip(np.rint((value - self.min) / self.spacing), 0, self.n_points - 1))

    def refined(self, n_points: int) -> "ContinuousAxis":
        return ContinuousAxis(self.name, self.min, self.max, n_points, self.periodic)


@dataclass(frozen=True)
class DiscreteAxis:
    """Finite label set 0..n_labels-1 with unit weight."""
    name: str
    n_labels: int

    def __post_init__(self):
        if self.n_labels < 1:
            raise ArgumentError(f"Axis {self.name!r} needs at least one label")

    @property
    def weight(self) -> float:
        return 1.0

    @property
    def size(self) -> int:
        return self.n_labels

    def points(self) -> np.ndarray:
        return np.arange(self.n_labels, dtype=float)


Axis = Union[ContinuousAxis, DiscreteAxis]


@dataclass(frozen=True)
class ConfigurationGrid:
    """Product of axes; every point carries the same quadrature weight."""
    axes: Tuple[Axis, ...]

    def __post_init__(self):
        axes = tuple(self.axes)
        if not axes:
            raise ArgumentError("A configuration grid needs at least one axis")
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ArgumentError(f"Axis names must be unique: {names}")
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.shape))

    @property
    def weight(self) -> float:
        return float(np.prod([a.weight for a in self.axes]))

    @property
    def axis_names(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis_index(self, name: Union[str, int]) -> int:
        if isinstance(name, int):
            if not 0 <= name < len(self.axes):
                raise ArgumentError(f"Axis index {name} out of range")
            return name
        try:
            return self.axis_names.index(name)
        except ValueError:
            raise ArgumentError(f"Grid has no axis {name!r}; axes are {self.axis_names}") from None

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*[a.points() for a in self.axes], indexing="ij")

    def coordinate(self, axis: Union[str, int]) -> np.ndarray:
        """Coordinate of one axis broadcast over the full grid."""
        i = self.axis_index(axis)
        shape = [1] * len(self.axes)
        shape[i] = self.axes[i].size
        return np.broadcast_to(self.axes[i].points().reshape(shape), self.shape)


# ============================================================================
# States and functionals
# ============================================================================

@dataclass(frozen=True, eq=False)
class EnsembleState:
    """The canonical pair (P, S) sampled on a grid."""
    grid: ConfigurationGrid
    P: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float).reshape(self.grid.shape)
        S = np.array(self.S, dtype=float).reshape(self.grid.shape)
        if np.any(P < 0):
            raise ContractError(f"P has negative entries (min {P.min():.3e})")
        total = float(P.sum()) * self.grid.weight
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ContractError(f"Σ w·P = {total!r}, expected 1")
        if not np.all(np.isfinite(S[P > P_THRESHOLD])):
            raise ContractError("S must be finite wherever P is nonnegligible")
        P.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "S", S)

    @classmethod
    def normalized(cls, grid: ConfigurationGrid, P, S) -> "EnsembleState":
        P = np.asarray(P, dtype=float).reshape(grid.shape)
        total = float(P.sum()) * grid.weight
        if not total > 0:
            raise ArgumentError("Cannot normalize a vanishing density")
        return cls(grid, P / total, S)


Field = np.ndarray
ValueFn = Callable[[ConfigurationGrid, Field, Field], float]
GradientFn = Callable[[ConfigurationGrid, Field, Field], Tuple[Field, Field]]


@dataclass(frozen=True)
class ObservableFunctional:
    """
    A functional F[P, S] with its weight-corrected functional derivatives.

    value_fn and gradient_fn act on raw arrays so that perturbed,
    unnormalized fields can be evaluated. Without gradient_fn the derivatives
    come from central finite differences.
    """
    name: str
    value_fn: ValueFn
    gradient_fn: Optional[GradientFn] = None
    grid: Optional[ConfigurationGrid] = None

    def _check_grid(self, state: EnsembleState) -> None:
        if self.grid is not None and self.grid != state.grid:
            raise ArgumentError(f"Observable {self.name!r} is bound to a different grid")

    def value(self, state: EnsembleState) -> float:
        self._check_grid(state)
        return float(self.value_fn(state.grid, state.P, state.S))

    def gradient(self, state: EnsembleState) -> Tuple[Field, Field]:
        self._check_grid(state)
        if self.gradient_fn is not None:
            return self.gradient_fn(state.grid, state.P, state.S)
        return self.fd_gradient(state)

    def fd_gradient(self, state: EnsembleState) -> Tuple[Field, Field]:
        """Central differences per point, step 1e-6 relative, divided by w."""
        self._check_grid(state)
        grid = state.grid
        P = np.array(state.P, dtype=float)
        S = np.array(state.S, dtype=float)
        dP = np.zeros_like(P)
        dS = np.zeros_like(S)
        for target, out in ((P, dP), (S, dS)):
            flat = target.reshape(-1)
            out_flat = out.reshape(-1)
            for i in range(flat.size):
                v = flat[i]
                h = FD_RELATIVE_STEP * max(1.0, abs(v))
                flat[i] = v + h
                plus = self.value_fn(grid, P, S)
                flat[i] = v - h
                minus = self.value_fn(grid, P, S)
                flat[i] = v
                out_flat[i] = (plus - minus) / (2 * h)
        w = grid.weight
        return dP / w, dS / w

    def check_gradient(
        self,
        state: EnsembleState,
        rng: np.random.Generator,
        n_directions: int = 3,
    ) -> float:
        """Largest relative mismatch of directional differences against the gradient."""
        grad_P, grad_S = self.gradient(state)
        w = state.grid.weight
        worst = 0.0
        for _ in range(n_directions):
            dir_P, dir_S = _smooth_direction(state.grid, rng)
            eps = 1e-5
            plus = self.value_fn(state.grid, state.P + eps * dir_P, state.S + eps * dir_S)
            minus = self.value_fn(state.grid, state.P - eps * dir_P, state.S - eps * dir_S)
            fd = (plus - minus) / (2 * eps)
            analytic = w * float(np.sum(grad_P * dir_P) + np.sum(grad_S * dir_S))
            worst = max(worst, abs(fd - analytic) / max(1.0, abs(analytic)))
        return worst


def _smooth_direction(grid: ConfigurationGrid, rng: np.random.Generator) -> Tuple[Field, Field]:
    fields = []
    for _ in range(2):
        f = np.ones(grid.shape)
        for i, axis in enumerate(grid.axes):
            if isinstance(axis, ContinuousAxis):
                u = (grid.coordinate(i) - axis.min) / (axis.max - axis.min)
                a, b = rng.normal(size=2)
                f = f * (a * np.sin(np.pi * u) + b * np.sin(2 * np.pi * u))
            else:
                f = f * rng.normal(size=axis.size).reshape(
                    [axis.size if j == i else 1 for j in range(len(grid.axes))]
                )
        fields.append(f)
    return fields[0], fields[1]


# ============================================================================
# Classical observables
# ============================================================================

def phase_gradient(grid: ConfigurationGrid, S: Field, axis: Union[str, int]) -> Field:
    """∇S along one continuous axis; second order inside and at the edges."""
    i = grid.axis_index(axis)
    ax = grid.axes[i]
    if not isinstance(ax, ContinuousAxis):
        raise ArgumentError(f"Axis {ax.name!r} is discrete; ∇S needs a continuous axis")
    return np.gradient(S, ax.spacing, axis=i, edge_order=2)


def classical_observable(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    grid: ConfigurationGrid,
    axis: Union[str, int] = 0,
    name: str = "C_f",
) -> ObservableFunctional:
    """C_f[P, S] = Σ w P f(x, ∇S) for a phase-space function f(x, k)."""
    i = grid.axis_index(axis)
    if not isinstance(grid.axes[i], ContinuousAxis):
        raise ArgumentError(f"Axis {grid.axes[i].name!r} is discrete")
    X = grid.coordinate(i)

    def value(g: ConfigurationGrid, P: Field, S: Field) -> float:
        K = phase_gradient(g, S, i)
        try:
            values = np.broadcast_to(np.asarray(f(X, K), dtype=float), g.shape)
        except Exception as e:
            raise EvaluationError(f"{name}: phase-space function failed: {e}") from e
        if not np.all(np.isfinite(values[P > P_THRESHOLD])):
            raise EvaluationError(f"{name}: phase-space function returned non-finite values")
        return float(g.weight * np.sum(P * values))

    return ObservableFunctional(name, value, None, grid)


@dataclass(frozen=True)
class PhaseSpacePolynomial:
    """f(x, k) = Σ c[i, j] x^i k^j."""
    coeffs: np.ndarray
    name: str = ""

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_terms(cls, terms: Mapping[Tuple[int, int], float], name: str = "") -> "PhaseSpacePolynomial":
        if not terms:
            return cls(np.zeros((1, 1)), name or "0")
        deg_x = max(i for i, _ in terms) + 1
        deg_k = max(j for _, j in terms) + 1
        c = np.zeros((deg_x, deg_k))
        for (i, j), v in terms.items():
            c[i, j] += v
        return cls(c, name)

    @property
    def degree(self) -> int:
        nz = np.argwhere(np.abs(self.coeffs) > 0)
        return int(nz.sum(axis=1).max()) if len(nz) else 0

    def __call__(self, x, k):
        return npoly.polyval2d(x, k, self.coeffs)

    def d_dx(self) -> "PhaseSpacePolynomial":
        return PhaseSpacePolynomial(npoly.polyder(self.coeffs, axis=0))

    def d_dk(self) -> "PhaseSpacePolynomial":
        return PhaseSpacePolynomial(npoly.polyder(self.coeffs, axis=1))

    def __mul__(self, other: "PhaseSpacePolynomial") -> "PhaseSpacePolynomial":
        return PhaseSpacePolynomial(convolve2d(self.coeffs, other.coeffs))

    def __sub__(self, other: "PhaseSpacePolynomial") -> "PhaseSpacePolynomial":
        shape = np.maximum(self.coeffs.shape, other.coeffs.shape)
        out = np.zeros(shape)
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        out[: other.coeffs.shape[0], : other.coeffs.shape[1]] -= other.coeffs
        return PhaseSpacePolynomial(out)

    def bracket(self, other: "PhaseSpacePolynomial") -> "PhaseSpacePolynomial":
        """{f, g} = ∂_x f ∂_k g − ∂_k f ∂_x g."""
        out = self.d_dx() * other.d_dk() - self.d_dk() * other.d_dx()
        out_name = f"{{{self.name},{other.name}}}" if self.name and other.name else ""
        return PhaseSpacePolynomial(out.coeffs, out_name)


POLYNOMIAL_REGISTRY: Dict[str, PhaseSpacePolynomial] = {
    name: PhaseSpacePolynomial.from_terms({power: 1.0}, name)
    for name, power in {
        "1": (0, 0),
        "x": (1, 0),
        "k": (0, 1),
        "x^2": (2, 0),
        "k^2": (0, 2),
        "x*k": (1, 1),
        "x^3": (3, 0),
        "k^3": (0, 3),
        "x^2*k": (2, 1),
        "x*k^2": (1, 2),
    }.items()
}


def polynomial(name: Union[str, PhaseSpacePolynomial]) -> PhaseSpacePolynomial:
    if isinstance(name, PhaseSpacePolynomial):
        return name
    try:
        return POLYNOMIAL_REGISTRY[name]
    except KeyError:
        raise ArgumentError(
            f"Unknown polynomial {name!r}",
            hint=f"choose one of {sorted(POLYNOMIAL_REGISTRY)}",
        ) from None


# ============================================================================
# Quantum observables
# ============================================================================

def _tilde_psi(grid: ConfigurationGrid, P: Field, S: Field, hbar: float) -> np.ndarray:
    return np.sqrt(grid.weight * np.clip(P, 0, None)) * np.exp(1j * S / hbar)


def _apply_on_axes(M: np.ndarray, psi: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    ndim = psi.ndim
    rest = tuple(i for i in range(ndim) if i not in axes)
    perm = axes + rest
    moved = np.transpose(psi, perm)
    d = int(np.prod([psi.shape[i] for i in axes]))
    out = (M @ moved.reshape(d, -1)).reshape(moved.shape)
    return np.transpose(out, np.argsort(perm))


def quantum_observable(
    M: Operator,
    grid: ConfigurationGrid,
    axes: Optional[Sequence[Union[str, int]]] = None,
    hbar: Optional[float] = None,
    name: str = "Q_M",
) -> ObservableFunctional:
    """
    Q_M[P, S] = ⟨ψ̃|M ⊗ 1|ψ̃⟩ with analytic derivatives

        δQ/δP = Re[ψ̃*(Mψ̃)] / (P w),   δQ/δS = (2/ħ) Im[ψ̃*(Mψ̃)] / w.
    """
    if not M.hermitian:
        raise ContractError(f"{name}: quantum observables need a Hermitian operator")
    hbar = resolve_hbar(hbar)
    idx = tuple(grid.axis_index(a) for a in (axes if axes is not None else range(len(grid.axes))))
    sub_dim = int(np.prod([grid.axes[i].size for i in idx]))
    if M.space.total_dim != sub_dim:
        raise ArgumentError(
            f"{name}: operator dimension {M.space.total_dim} does not match axes "
            f"{[grid.axes[i].name for i in idx]} (dimension {sub_dim})"
        )
    matrix = M.matrix

    def local(g: ConfigurationGrid, P: Field, S: Field) -> Tuple[np.ndarray, np.ndarray]:
        psi = _tilde_psi(g, P, S, hbar)
        return psi, np.conj(psi) * _apply_on_axes(matrix, psi, idx)

    def value(g: ConfigurationGrid, P: Field, S: Field) -> float:
        return float(np.sum(local(g, P, S)[1]).real)

    def gradient(g: ConfigurationGrid, P: Field, S: Field) -> Tuple[Field, Field]:
        if np.any(P <= P_THRESHOLD):
            raise DomainError(f"{name}: δ/δP is singular where P vanishes")
        _, a = local(g, P, S)
        w = g.weight
        return a.real / (P * w), (2.0 / hbar) * a.imag / w

    return ObservableFunctional(name, value, gradient, grid)


# ============================================================================
# Bracket
# ============================================================================

def poisson_bracket(A: ObservableFunctional, B: ObservableFunctional, state: EnsembleState) -> float:
    """Σ w (δA/δP δB/δS − δA/δS δB/δP)."""
    for F in (A, B):
        if F.grid is not None and F.grid != state.grid:
            raise ArgumentError(f"Observable {F.name!r} is bound to a different grid than the state")
    aP, aS = A.gradient(state)
    bP, bS = B.gradient(state)
    if aP.shape != state.grid.shape or bP.shape != state.grid.shape:
        raise ArgumentError("Functional derivative shape does not match the state grid")
    return float(state.grid.weight * np.sum(aP * bS - aS * bP))


# ============================================================================
# Hybrid wavefunction
# ============================================================================

@dataclass(frozen=True, eq=False)
class HybridWavefunction:
    """ψ = √P e^{iS/ħ} on the configuration grid."""
    grid: ConfigurationGrid
    values: np.ndarray
    hbar: float

    def to_state(self) -> EnsembleState:
        """P = |ψ|², S = ħ·arg ψ (principal branch)."""
        return EnsembleState.normalized(self.grid, np.abs(self.values) ** 2, self.hbar * np.angle(self.values))

    def as_quantum_state(self) -> QuantumState:
        """Quadrature-normalized vector √w ψ as a state on the grid's axes."""
        vec = np.sqrt(self.grid.weight) * self.values.reshape(-1)
        return QuantumState.from_vector(vec, self.grid.shape)


def hybrid_wavefunction(state: EnsembleState, hbar: Optional[float] = None) -> HybridWavefunction:
    hbar = resolve_hbar(hbar)
    values = np.sqrt(state.P) * np.exp(1j * state.S / hbar)
    values.setflags(write=False)
    return HybridWavefunction(state.grid, values, hbar)


# ============================================================================
# Isomorphism checks
# ============================================================================

def verify_cb(
    f: Union[str, PhaseSpacePolynomial],
    g: Union[str, PhaseSpacePolynomial],
    states: Sequence[EnsembleState],
    axis: Union[str, int] = 0,
) -> float:
    """max over states of |{C_f, C_g} − C_{f,g}|."""
    f, g = polynomial(f), polynomial(g)
    fg = f.bracket(g)
    worst = 0.0
    for state in states:
        grid = state.grid
        Cf = classical_observable(f, grid, axis, name=f"C[{f.name}]")
        Cg = classical_observable(g, grid, axis, name=f"C[{g.name}]")
        Cfg = classical_observable(fg, grid, axis, name=f"C[{fg.name}]")
        dev = abs(poisson_bracket(Cf, Cg, state) - Cfg.value(state))
        worst = max(worst, dev)
    return worst


def verify_qb(
    M: Operator,
    N: Operator,
    states: Sequence[EnsembleState],
    axes: Optional[Sequence[Union[str, int]]] = None,
    hbar: Optional[float] = None,
) -> float:
    """max over states of |{Q_M, Q_N} − Q_{[M,N]/(iħ)}|."""
    hbar = resolve_hbar(hbar)
    comm = (M.matrix @ N.matrix - N.matrix @ M.matrix) / (1j * hbar)
    C = Operator(M.space, (comm + comm.conj().T) / 2, hermitian=True)
    worst = 0.0
    for state in states:
        grid = state.grid
        idx = axes if axes is not None else range(len(grid.axes))
        if any(not isinstance(grid.axes[grid.axis_index(a)], DiscreteAxis) for a in idx):
            raise ArgumentError("verify_qb works on discrete axes")
        QM = quantum_observable(M, grid, axes, hbar, "Q_M")
        QN = quantum_observable(N, grid, axes, hbar, "Q_N")
        QC = quantum_observable(C, grid, axes, hbar, "Q_[M,N]")
        worst = max(worst, abs(poisson_bracket(QM, QN, state) - QC.value(state)))
    return worst


@dataclass(frozen=True)
class GaussianSpec:
    """Density centre/width and phase S = k0·x + s1·sin x."""
    center: float = 0.0
    width: float = 1.0
    k0: float = 0.0
    s1: float = 0.0


def gaussian_ensemble(grid: ConfigurationGrid, spec: GaussianSpec, axis: Union[str, int] = 0) -> EnsembleState:
    """Smooth Gaussian ensemble along one continuous axis of a 1-D grid."""
    if spec.width <= 0:
        raise ArgumentError(f"Gaussian width must be positive, got {spec.width}")
    x = grid.coordinate(axis)
    P = np.exp(-((x - spec.center) ** 2) / (2 * spec.width ** 2))
    S = spec.k0 * x + spec.s1 * np.sin(x)
    return EnsembleState.normalized(grid, P, S)


def random_gaussian_specs(rng: np.random.Generator, n: int) -> List[GaussianSpec]:
    return [
        GaussianSpec(
            center=float(rng.uniform(-1, 1)),
            width=float(rng.uniform(0.8, 1.5)),
            k0=float(rng.uniform(-1, 1)),
            s1=float(rng.uniform(0.2, 0.6)),
        )
        for _ in range(n)
    ]


def random_discrete_state(
    grid: ConfigurationGrid,
    rng: np.random.Generator,
    hbar: Optional[float] = None,
) -> EnsembleState:
    """Dirichlet P (strictly positive) and uniform phases on a discrete grid."""
    hbar = resolve_hbar(hbar)
    P = rng.dirichlet(np.ones(grid.n_points)).reshape(grid.shape) / grid.weight
    S = rng.uniform(0, 2 * np.pi * hbar, size=grid.shape)
    return EnsembleState.normalized(grid, P, S)


@dataclass(frozen=True)
class CBConvergence:
    f: str
    g: str
    dev_coarse: float
    dev_fine: float
    order: Optional[float]

    @property
    def exact(self) -> bool:
        return self.dev_coarse < CB_NOISE_FLOOR and self.dev_fine < CB_NOISE_FLOOR

    @property
    def passed(self) -> bool:
        return self.exact or (self.order is not None and self.order >= CB_MIN_ORDER)

    def to_dict(self) -> dict:
        return {
            "f": self.f,
            "g": self.g,
            "dev_coarse": self.dev_coarse,
            "dev_fine": self.dev_fine,
            "order": self.order,
            "exact": self.exact,
            "passed": self.passed,
        }


def cb_convergence(
    f: Union[str, PhaseSpacePolynomial],
    g: Union[str, PhaseSpacePolynomial],
    specs: Sequence[GaussianSpec],
    coarse: int = 129,
    fine: int = 257,
    bounds: Tuple[float, float] = (-8.0, 8.0),
) -> CBConvergence:
    """
    Bracket deviation on a coarse and a fine grid and the observed order
    log2(dev_coarse / dev_fine). Deviations under the noise floor count as
    exact and carry no order.
    """
    f, g = polynomial(f), polynomial(g)
    devs = []
    for n in (coarse, fine):
        grid = ConfigurationGrid((ContinuousAxis("x", bounds[0], bounds[1], n),))
        devs.append(verify_cb(f, g, [gaussian_ensemble(grid, s) for s in specs]))
    order = None
    if devs[0] >= CB_NOISE_FLOOR and devs[1] > 0:
        order = float(np.log2(devs[0] / devs[1]))
    result = CBConvergence(f.name, g.name, devs[0], devs[1], order)
    logger.debug(f"cb_convergence {f.name},{g.name}: {result.to_dict()}")
    return result


def marginal_moments(
    state: EnsembleState,
    axis: Union[str, int],
    orders: Sequence[int] = (1, 2, 3, 4),
) -> Dict[int, float]:
    """Raw moments E[z^n] of one axis under the marginal of P."""
    i = state.grid.axis_index(axis)
    other = tuple(j for j in range(len(state.grid.axes)) if j != i)
    marginal = state.P.sum(axis=other) * state.grid.weight
    z = state.grid.axes[i].points()
    return {int(n): float(np.sum(marginal * z ** n)) for n in orders}


def qubit_grid(n_levels: int = 2, name: str = "s") -> ConfigurationGrid:
    return ConfigurationGrid((DiscreteAxis(name, n_levels),))


def operator_on(matrix: np.ndarray) -> Operator:
    """Hermitian operator wrapper for a square matrix."""
    m = np.asarray(matrix, dtype=complex)
    return Operator(HilbertSpace((m.shape[0],)), m, hermitian=True)
