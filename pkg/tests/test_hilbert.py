"""Tests for states, operators and entanglement figures."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qcmediator.errors import ArgumentError, CapacityError, ContractError
from qcmediator.hilbert import (
    Bipartition,
    DensityOperator,
    HilbertSpace,
    Operator,
    QuantumState,
    SIGMA_X,
    SIGMA_Z,
    expm_apply,
    fidelity,
    mixed_report,
    negativity,
    partial_trace,
    partial_transpose,
    pauli,
    permute_subsystems,
    random_density,
    random_hermitian,
    random_pure_state,
    random_unitary,
    reduced_density,
    schmidt,
    tensor,
)

CUT = Bipartition((0,), (1,))


def bell() -> QuantumState:
    return QuantumState.from_vector([1, 0, 0, 1], (2, 2))


class TestHilbertSpace:
    def test_total_dim(self):
        assert HilbertSpace((2, 3, 4)).total_dim == 24

    def test_rejects_nonpositive(self):
        with pytest.raises(ArgumentError):
            HilbertSpace((2, 0))

    def test_join_capacity(self, monkeypatch):
        from qcmediator import hilbert

        monkeypatch.setattr(hilbert.DEFAULT_CONFIG, "max_total_dim", 16)
        with pytest.raises(CapacityError):
            HilbertSpace((4, 4)).join(HilbertSpace((2,)))


class TestBipartition:
    def test_split(self):
        cut = Bipartition.split(3, [1])
        assert cut.left == (1,)
        assert cut.right == (0, 2)

    def test_empty_side(self):
        with pytest.raises(ArgumentError):
            Bipartition((0, 1), ()).validate(2)

    def test_not_a_partition(self):
        with pytest.raises(ArgumentError):
            Bipartition((0,), (0,)).validate(2)


class TestStates:
    def test_unnormalized_rejected(self):
        with pytest.raises(ContractError):
            QuantumState(HilbertSpace((2,)), np.array([1.0, 1.0]))

    def test_from_vector_normalizes(self):
        psi = QuantumState.from_vector([3, 4])
        assert_allclose(psi.amplitudes, [0.6, 0.8])

    def test_zero_vector(self):
        with pytest.raises(ArgumentError):
            QuantumState.from_vector([0, 0])

    def test_density_rejects_negative(self):
        with pytest.raises(ContractError):
            DensityOperator.from_matrix(np.diag([1.5, -0.5]))

    def test_density_rejects_trace(self):
        with pytest.raises(ContractError):
            DensityOperator.from_matrix(np.eye(2))


class TestOperator:
    def test_hermitian_flag_checked(self):
        with pytest.raises(ContractError):
            Operator(HilbertSpace((2,)), np.array([[0, 1], [0, 0]]), hermitian=True)

    def test_from_matrix_detects_hermitian(self):
        assert Operator.from_matrix(SIGMA_X).hermitian
        assert not Operator.from_matrix(np.array([[0, 1], [0, 0]])).hermitian

    def test_expectation(self):
        plus = QuantumState.from_vector([1, 1])
        assert pauli("x").expectation(plus) == pytest.approx(1.0)
        assert pauli("z").expectation(plus) == pytest.approx(0.0, abs=1e-15)

    def test_unknown_pauli(self):
        with pytest.raises(ArgumentError):
            pauli("w")


class TestPartialTrace:
    def test_product_state(self, rng):
        a = random_pure_state((2,), rng)
        b = random_pure_state((3,), rng)
        rho = partial_trace(tensor(a, b).density(), [0])
        assert_allclose(rho.matrix, a.density().matrix, atol=1e-12)

    def test_reduced_density_matches(self, rng):
        psi = random_pure_state((2, 3, 2), rng)
        assert_allclose(
            reduced_density(psi, [0, 2]).matrix,
            partial_trace(psi.density(), [0, 2]).matrix,
            atol=1e-12,
        )

    def test_bell_marginal(self):
        assert_allclose(partial_trace(bell().density(), [1]).matrix, np.eye(2) / 2, atol=1e-15)

    def test_permute_roundtrip(self, rng):
        rho = random_density((2, 3), rng)
        back = permute_subsystems(permute_subsystems(rho, (1, 0)), (1, 0))
        assert_allclose(back.matrix, rho.matrix)


class TestTensor:
    def test_basis_states(self):
        out = tensor(QuantumState.basis((2,), 0), QuantumState.basis((2,), 1))
        assert out.space.dims == (2, 2)
        assert_allclose(out.amplitudes, [0, 1, 0, 0])

    def test_operators(self):
        out = tensor(pauli("z"), pauli("i"))
        assert out.hermitian
        assert_allclose(out.matrix, np.diag([1, 1, -1, -1]))

    def test_plus_minus_amplitudes(self):
        plus = QuantumState.from_vector([1, 1])
        minus = QuantumState.from_vector([1, -1])
        assert_allclose(tensor(plus, minus).amplitudes, [0.5, -0.5, 0.5, -0.5], atol=1e-15)

    def test_mixed_types_rejected(self):
        with pytest.raises(ArgumentError):
            tensor(QuantumState.basis((2,), 0), pauli("x"))

    def test_capacity(self, monkeypatch):
        from qcmediator import hilbert

        monkeypatch.setattr(hilbert.DEFAULT_CONFIG, "max_total_dim", 8)
        with pytest.raises(CapacityError):
            tensor(random_density((4,), np.random.default_rng(0)), random_density((4,), np.random.default_rng(1)))


class TestNegativity:
    def test_bell_is_half(self):
        assert negativity(bell().density(), CUT) == pytest.approx(0.5)

    def test_product_is_zero(self, rng):
        rho = tensor(random_density((2,), rng), random_density((2,), rng))
        assert negativity(rho, CUT) <= 1e-12

    def test_product_stays_zero_under_local_unitaries(self, rng):
        for _ in range(5):
            rho = tensor(random_density((2,), rng), random_density((3,), rng))
            local = np.kron(random_unitary(2, rng), random_unitary(3, rng))
            rotated = DensityOperator.from_matrix(local @ rho.matrix @ local.conj().T, (2, 3))
            assert negativity(rotated, CUT) <= 1e-12

    def test_invariant_under_local_unitaries(self, rng):
        rho = random_density((2, 2), rng, rank=1)
        local = np.kron(random_unitary(2, rng), random_unitary(2, rng))
        rotated = DensityOperator.from_matrix(local @ rho.matrix @ local.conj().T, (2, 2))
        assert negativity(rotated, CUT) == pytest.approx(negativity(rho, CUT), abs=1e-12)

    def test_partial_transpose_spectrum(self):
        eig = np.linalg.eigvalsh(partial_transpose(bell().density(), CUT))
        assert_allclose(np.sort(eig), [-0.5, 0.5, 0.5, 0.5], atol=1e-12)

    def test_separable_mixture(self, rng):
        parts = [tensor(random_density((2,), rng), random_density((2,), rng)) for _ in range(4)]
        rho = DensityOperator.mixture([0.1, 0.2, 0.3, 0.4], parts)
        assert negativity(rho, CUT) <= 1e-12

    def test_werner_threshold(self):
        rho_b = bell().density().matrix
        for p, expected in ((0.2, 0.0), (0.6, (3 * 0.6 - 1) / 4)):
            rho = DensityOperator.from_matrix(p * rho_b + (1 - p) * np.eye(4) / 4, (2, 2))
            assert negativity(rho, CUT) == pytest.approx(expected, abs=1e-12)


class TestSchmidt:
    def test_bell(self):
        report = schmidt(bell(), CUT)
        assert report.entropy == pytest.approx(math.log(2))
        assert report.negativity == pytest.approx(0.5)
        assert_allclose(report.schmidt_values, [2 ** -0.5, 2 ** -0.5])

    def test_matches_mixed_negativity(self, rng):
        psi = random_pure_state((2, 3), rng)
        assert schmidt(psi, CUT).negativity == pytest.approx(negativity(psi.density(), CUT), abs=1e-12)

    def test_product(self, rng):
        psi = tensor(random_pure_state((3,), rng), random_pure_state((2,), rng))
        report = schmidt(psi, CUT)
        assert report.entropy <= 1e-12
        assert len(report.schmidt_values) == 1

    def test_mixed_report(self):
        report = mixed_report(bell().density(), CUT)
        assert not report.pure
        assert report.negativity == pytest.approx(0.5)
        assert report.purity == pytest.approx(0.5)


class TestExpmApply:
    def test_pauli_rotation(self):
        zero = QuantumState.basis((2,), 0)
        out = expm_apply(pauli("x"), math.pi / 2, zero)
        assert fidelity(out, QuantumState.basis((2,), 1)) == pytest.approx(1.0)

    def test_unitary_on_random(self, rng):
        H = Operator.from_matrix(random_hermitian(6, rng))
        psi = random_pure_state((6,), rng)
        out = expm_apply(H, 0.7, psi)
        assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0)
        back = expm_apply(H, -0.7, out)
        assert_allclose(back.amplitudes, psi.amplitudes, atol=1e-12)

    def test_composition(self, rng):
        H = Operator.from_matrix(random_hermitian(4, rng))
        psi = random_pure_state((4,), rng)
        stepped = expm_apply(H, 0.4, expm_apply(H, 0.9, psi))
        direct = expm_apply(H, 1.3, psi)
        assert_allclose(stepped.amplitudes, direct.amplitudes, atol=1e-12)

    def test_entangling_generator(self):
        plus = QuantumState.from_vector([1, 1, 1, 1], (2, 2))
        H = Operator(HilbertSpace((2, 2)), np.kron(SIGMA_Z, SIGMA_Z), hermitian=True)
        out = expm_apply(H, math.pi / 4, plus)
        assert schmidt(out, CUT).entropy == pytest.approx(math.log(2))

    def test_requires_hermitian(self):
        H = Operator.from_matrix(np.array([[0, 1], [0, 0]]))
        with pytest.raises(ContractError):
            expm_apply(H, 1.0, QuantumState.basis((2,), 0))


def test_random_unitary_is_unitary(rng):
    u = random_unitary(5, rng)
    assert_allclose(u @ u.conj().T, np.eye(5), atol=1e-12)
