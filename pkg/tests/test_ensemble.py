"""Tests for configuration-space ensembles, observables and brackets."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qcmediator.errors import ArgumentError, ContractError, DomainError
from qcmediator.hilbert import SIGMA_X, SIGMA_Y, SIGMA_Z
from qcmediator.ensemble import (
    ConfigurationGrid,
    ContinuousAxis,
    DiscreteAxis,
    EnsembleState,
    GaussianSpec,
    PhaseSpacePolynomial,
    cb_convergence,
    classical_observable,
    gaussian_ensemble,
    hybrid_wavefunction,
    marginal_moments,
    operator_on,
    phase_gradient,
    poisson_bracket,
    polynomial,
    quantum_observable,
    qubit_grid,
    random_discrete_state,
    random_gaussian_specs,
    verify_cb,
    verify_qb,
)


def line(n=129, lo=-8.0, hi=8.0):
    return ConfigurationGrid((ContinuousAxis("x", lo, hi, n),))


class TestGrids:
    def test_periodic_spacing(self):
        axis = ContinuousAxis("x", -32.0, 32.0, 256, periodic=True)
        assert axis.spacing == 0.25
        assert axis.points()[-1] == pytest.approx(31.75)

    def test_closed_spacing(self):
        assert ContinuousAxis("x", -8.0, 8.0, 129).spacing == 0.125

    def test_too_few_points(self):
        with pytest.raises(ArgumentError):
            ContinuousAxis("x", 0.0, 1.0, 3)

    def test_duplicate_names(self):
        with pytest.raises(ArgumentError):
            ConfigurationGrid((DiscreteAxis("s", 2), DiscreteAxis("s", 2)))

    def test_weight_is_product(self):
        grid = ConfigurationGrid((ContinuousAxis("x", 0.0, 1.0, 11), DiscreteAxis("s", 3)))
        assert grid.weight == pytest.approx(0.1)
        assert grid.shape == (11, 3)


class TestEnsembleState:
    def test_normalization_enforced(self):
        grid = qubit_grid(2)
        with pytest.raises(ContractError):
            EnsembleState(grid, [0.2, 0.2], [0.0, 0.0])

    def test_negative_density(self):
        with pytest.raises(ContractError):
            EnsembleState(qubit_grid(2), [1.5, -0.5], [0.0, 0.0])

    def test_normalized(self):
        state = EnsembleState.normalized(qubit_grid(2), [1.0, 3.0], [0.0, 1.0])
        assert_allclose(state.P, [0.25, 0.75])


class TestClassicalObservables:
    def test_phase_gradient_of_linear_phase(self):
        grid = line()
        S = 0.7 * grid.coordinate("x")
        assert_allclose(phase_gradient(grid, S, "x"), 0.7, atol=1e-12)

    def test_phase_gradient_needs_continuous_axis(self):
        with pytest.raises(ArgumentError):
            phase_gradient(qubit_grid(2), np.zeros(2), "s")

    def test_mean_momentum(self):
        grid = line()
        state = gaussian_ensemble(grid, GaussianSpec(0.0, 1.0, k0=0.4))
        Ck = classical_observable(lambda x, k: k, grid, "x")
        assert Ck.value(state) == pytest.approx(0.4, abs=1e-12)

    def test_canonical_pair(self):
        grid = line()
        state = gaussian_ensemble(grid, GaussianSpec(0.2, 1.1, 0.3, 0.4))
        Cx = classical_observable(polynomial("x"), grid, "x")
        Ck = classical_observable(polynomial("k"), grid, "x")
        assert poisson_bracket(Cx, Ck, state) == pytest.approx(1.0, abs=1e-6)


class TestPolynomials:
    def test_bracket_of_canonical_pair(self):
        out = polynomial("x").bracket(polynomial("k"))
        assert out(0.3, -1.2) == pytest.approx(1.0)

    def test_bracket_of_products(self):
        # {x², k} = 2x
        out = polynomial("x^2").bracket(polynomial("k"))
        assert out(1.5, 0.0) == pytest.approx(3.0)

    def test_degree(self):
        assert polynomial("x*k^2").degree == 3
        assert PhaseSpacePolynomial.from_terms({}).degree == 0

    def test_unknown_name(self):
        with pytest.raises(ArgumentError):
            polynomial("x^9")


class TestQuantumObservables:
    def test_expectation(self, rng):
        grid = qubit_grid(2)
        state = random_discrete_state(grid, rng)
        psi = hybrid_wavefunction(state).as_quantum_state()
        Q = quantum_observable(operator_on(SIGMA_X), grid)
        expected = np.vdot(psi.amplitudes, SIGMA_X @ psi.amplitudes).real
        assert Q.value(state) == pytest.approx(expected)

    def test_analytic_gradient_matches_differences(self, rng):
        grid = qubit_grid(3)
        state = random_discrete_state(grid, rng)
        Q = quantum_observable(operator_on(np.diag([1.0, -0.5, 2.0]) + 0.3), grid)
        assert Q.check_gradient(state, rng) <= 1e-6

    def test_gradient_undefined_at_nodes(self):
        grid = qubit_grid(2)
        state = EnsembleState(grid, [1.0, 0.0], [0.0, 0.0])
        with pytest.raises(DomainError):
            quantum_observable(operator_on(SIGMA_X), grid).gradient(state)

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            quantum_observable(operator_on(np.eye(3)), qubit_grid(2))

    def test_non_hermitian(self):
        from qcmediator.hilbert import Operator

        with pytest.raises(ContractError):
            quantum_observable(Operator.from_matrix(np.array([[0, 1], [0, 0]])), qubit_grid(2))


class TestQuantumBracket:
    def test_pauli_algebra(self, rng):
        grid = qubit_grid(2)
        state = random_discrete_state(grid, rng)
        Qx = quantum_observable(operator_on(SIGMA_X), grid)
        Qy = quantum_observable(operator_on(SIGMA_Y), grid)
        Qz = quantum_observable(operator_on(SIGMA_Z), grid)
        # [σx, σy]/i = 2σz
        assert poisson_bracket(Qx, Qy, state) == pytest.approx(2 * Qz.value(state), abs=1e-10)

    @pytest.mark.parametrize("levels", [2, 3])
    def test_random_pairs(self, levels, rng):
        from qcmediator.hilbert import random_hermitian

        grid = qubit_grid(levels)
        states = [random_discrete_state(grid, rng) for _ in range(5)]
        for _ in range(5):
            M = operator_on(random_hermitian(levels, rng))
            N = operator_on(random_hermitian(levels, rng))
            assert verify_qb(M, N, states) <= 1e-8

    def test_scales_with_hbar(self, rng):
        grid = qubit_grid(2)
        state = random_discrete_state(grid, rng, hbar=0.5)
        dev = verify_qb(operator_on(SIGMA_X), operator_on(SIGMA_Z), [state], hbar=0.5)
        assert dev <= 1e-8

    def test_requires_discrete_axes(self):
        with pytest.raises(ArgumentError):
            verify_qb(operator_on(SIGMA_X), operator_on(SIGMA_Y), [gaussian_ensemble(line(8), GaussianSpec())])


class TestClassicalBracket:
    @pytest.mark.parametrize("f, g", [("x", "x"), ("x", "k"), ("x^2", "k"), ("k^2", "x")])
    def test_exact_pairs(self, f, g, rng):
        states = [gaussian_ensemble(line(), s) for s in random_gaussian_specs(rng, 2)]
        assert verify_cb(f, g, states) <= 1e-7

    def test_second_order_pair(self, rng):
        result = cb_convergence("x*k", "k", random_gaussian_specs(rng, 2))
        assert result.passed
        assert result.exact or result.order >= 1.9

    def test_preset_pairs_are_registered(self):
        from qcmediator.scenarios import load_preset

        pairs = load_preset("brackets")["params"]["cb_pairs"]
        assert ["x", "k"] in pairs
        assert all(polynomial(f) and polynomial(g) for f, g in pairs)


def random_polynomial(rng, shape=(3, 2)):
    return PhaseSpacePolynomial(0.3 * rng.normal(size=shape))


class TestPoissonBracket:
    @pytest.fixture
    def setup(self, rng):
        grid = line(65)
        state = gaussian_ensemble(grid, random_gaussian_specs(rng, 1)[0])
        return grid, state

    def test_antisymmetric(self, setup, rng):
        grid, state = setup
        for _ in range(3):
            A = classical_observable(random_polynomial(rng), grid)
            B = classical_observable(random_polynomial(rng), grid)
            assert poisson_bracket(A, B, state) == pytest.approx(-poisson_bracket(B, A, state), abs=1e-12)

    def test_self_bracket_vanishes(self, setup, rng):
        grid, state = setup
        A = classical_observable(random_polynomial(rng), grid)
        assert poisson_bracket(A, A, state) == pytest.approx(0.0, abs=1e-12)

    def test_bilinear(self, setup, rng):
        grid, state = setup
        f, g, h = (random_polynomial(rng) for _ in range(3))
        alpha, beta = rng.normal(size=2)
        combo = PhaseSpacePolynomial(alpha * f.coeffs + beta * g.coeffs)
        C = classical_observable(h, grid)
        left = poisson_bracket(classical_observable(combo, grid), C, state)
        right = (
            alpha * poisson_bracket(classical_observable(f, grid), C, state)
            + beta * poisson_bracket(classical_observable(g, grid), C, state)
        )
        assert left == pytest.approx(right, rel=1e-6, abs=1e-6)

    def test_extends_polynomial_bracket(self, setup, rng):
        # quadratic in x against affine in k: exact on the grid
        grid, state = setup
        for _ in range(3):
            f, g = random_polynomial(rng, (3, 1)), random_polynomial(rng, (1, 2))
            expected = classical_observable(f.bracket(g), grid).value(state)
            got = poisson_bracket(classical_observable(f, grid), classical_observable(g, grid), state)
            assert got == pytest.approx(expected, rel=1e-6, abs=1e-7)

    def test_foreign_grid_rejected(self, setup):
        grid, state = setup
        A = classical_observable(polynomial("x"), line(33))
        with pytest.raises(ArgumentError):
            poisson_bracket(A, A, state)


class TestHybridWavefunction:
    def test_roundtrip(self, rng):
        grid = qubit_grid(3)
        state = random_discrete_state(grid, rng)
        back = hybrid_wavefunction(state).to_state()
        assert_allclose(back.P, state.P, atol=1e-14)
        phase_diff = np.angle(np.exp(1j * (back.S - state.S)))
        assert_allclose(phase_diff, 0.0, atol=1e-12)

    def test_quantum_state_normalized(self):
        grid = line()
        wave = hybrid_wavefunction(gaussian_ensemble(grid, GaussianSpec(0.0, 1.0, 0.5)))
        assert np.linalg.norm(wave.as_quantum_state().amplitudes) == pytest.approx(1.0)


def test_marginal_moments_of_gaussian():
    grid = line(257)
    state = gaussian_ensemble(grid, GaussianSpec(0.5, 1.0))
    moments = marginal_moments(state, "x", orders=(1, 2))
    assert moments[1] == pytest.approx(0.5, abs=1e-10)
    assert moments[2] == pytest.approx(1.25, abs=1e-10)
