"""
tests/test_qcore.py
Density-matrix helpers and the PolarizationState container.
"""
import math

import numpy as np
import pytest

from weakri_qcore import (
    H_KET,
    V_KET,
    PolarizationState,
    QCoreError,
    expectation,
    min_eigenvalue,
    partial_trace,
    pauli_direction,
    polarization_ket,
    projector,
    purity,
    random_density_matrix,
    tensor_product,
)
from weakri_theory import correlator

ANGLES = np.linspace(-math.pi, math.pi, 17)


class TestProjectors:
    """Π(θ) = (I + σ(θ))/2 with σ(θ) = cos2θ σz + sin2θ σx."""

    def test_horizontal_and_vertical(self) -> None:
        assert np.allclose(projector(0.0), [[1, 0], [0, 0]])
        assert np.allclose(projector(math.pi / 2), [[0, 0], [0, 1]], atol=1e-15)

    def test_diagonal(self) -> None:
        assert np.allclose(projector(math.pi / 4), [[0.5, 0.5], [0.5, 0.5]])

    def test_idempotent_and_rank_one(self) -> None:
        for theta in np.linspace(0, math.pi, 7):
            p = projector(theta)
            assert np.allclose(p @ p, p)
            assert np.trace(p).real == pytest.approx(1.0)

    def test_ket_is_the_unit_eigenvector(self) -> None:
        theta = 0.37
        ket = polarization_ket(theta)
        assert np.allclose(projector(theta) @ ket, ket)

    def test_pauli_direction_squares_to_identity(self) -> None:
        s = pauli_direction(1.1)
        assert np.allclose(s @ s, np.eye(2))

    @pytest.mark.parametrize('theta', ANGLES)
    def test_orthogonal_projectors_complete(self, theta) -> None:
        total = projector(theta) + projector(theta + math.pi / 2)
        np.testing.assert_allclose(total, np.eye(2), atol=1e-12)

    @pytest.mark.parametrize('theta', ANGLES)
    def test_period_is_pi(self, theta) -> None:
        np.testing.assert_allclose(pauli_direction(theta + math.pi), pauli_direction(theta), atol=1e-12)
        np.testing.assert_allclose(projector(theta + math.pi), projector(theta), atol=1e-12)


class TestTensorProduct:
    """Kronecker product in A⊗B ordering."""

    def test_identities(self) -> None:
        assert np.array_equal(tensor_product(np.eye(2), np.eye(2)), np.eye(4))

    def test_dimensions_multiply(self) -> None:
        assert tensor_product(np.eye(2), np.ones((3, 1))).shape == (6, 2)

    def test_zz_parity_on_hv(self) -> None:
        zz = tensor_product(pauli_direction(0.0), pauli_direction(0.0))
        hv = np.kron(H_KET, V_KET)
        np.testing.assert_allclose(zz @ hv, -hv)

    def test_mixed_product_rule(self) -> None:
        rng = np.random.default_rng(5)
        a, b, c, d = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(4))
        np.testing.assert_allclose(tensor_product(a, b) @ tensor_product(c, d),
                                   tensor_product(a @ c, b @ d), atol=1e-12)

    def test_projector_pair_on_singlet(self, singlet) -> None:
        joint = tensor_product(projector(0.0), projector(math.pi / 8))
        expected = (1 - math.cos(math.pi / 4)) / 4
        assert expectation(singlet.rho, joint) == pytest.approx(expected, abs=1e-12)
        assert correlator(singlet, 0.0, math.pi / 8) == pytest.approx(expected, abs=1e-12)


class TestStates:
    """Werner family, partial trace and validation."""

    def test_singlet_is_pure(self, singlet) -> None:
        assert singlet.purity == pytest.approx(1.0, abs=1e-12)

    def test_singlet_reduces_to_maximally_mixed(self, singlet) -> None:
        assert np.allclose(singlet.reduced('A'), np.eye(2) / 2)
        assert np.allclose(partial_trace(singlet.rho, 'B'), np.eye(2) / 2)

    @pytest.mark.parametrize('visibility', [0.0, 0.5, 0.983, 1.0])
    def test_werner_purity(self, visibility) -> None:
        state = PolarizationState.werner(visibility)
        assert state.purity == pytest.approx((1 + 3 * visibility ** 2) / 4, abs=1e-12)

    def test_werner_rejects_visibility_outside_unit_interval(self) -> None:
        with pytest.raises(QCoreError, match='outside'):
            PolarizationState.werner(1.2)

    def test_product_state_reduces_to_factors(self) -> None:
        state = PolarizationState.from_kets(H_KET, V_KET)
        assert np.allclose(state.reduced('A'), [[1, 0], [0, 0]])
        assert np.allclose(state.reduced('B'), [[0, 0], [0, 1]])

    def test_non_hermitian_rejected(self) -> None:
        rho = np.eye(4, dtype=complex) / 4
        rho[0, 1] = 0.1
        with pytest.raises(QCoreError, match='Hermitian'):
            PolarizationState(rho)

    def test_wrong_trace_rejected(self) -> None:
        with pytest.raises(QCoreError, match='trace'):
            PolarizationState(np.eye(4) / 2)

    def test_negative_eigenvalue_rejected(self) -> None:
        with pytest.raises(QCoreError, match='negative'):
            PolarizationState(np.diag([1.5, -0.5, 0.0, 0.0]))

    def test_random_state_is_valid(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(20):
            rho = random_density_matrix(rng)
            assert np.trace(rho).real == pytest.approx(1.0)
            assert 0.25 - 1e-12 <= purity(rho) <= 1.0 + 1e-12

    def test_partial_traces_of_random_states_are_states(self) -> None:
        rng = np.random.default_rng(17)
        for _ in range(1000):
            rho = random_density_matrix(rng)
            for keep in ('A', 'B'):
                reduced = partial_trace(rho, keep)
                assert abs(np.trace(reduced) - 1.0) <= 1e-10
                assert min_eigenvalue(reduced) >= -1e-12

    def test_product_keeps_its_factors(self) -> None:
        rng = np.random.default_rng(8)
        rho_a = random_density_matrix(rng, dim=2)
        rho_b = random_density_matrix(rng, dim=2)
        joint = tensor_product(rho_a, rho_b)
        np.testing.assert_allclose(partial_trace(joint, 'A'), rho_a, atol=1e-12)
        np.testing.assert_allclose(partial_trace(joint, 'B'), rho_b, atol=1e-12)

    def test_werner_reduces_to_maximally_mixed(self) -> None:
        np.testing.assert_allclose(PolarizationState.werner(0.983).reduced('A'), np.eye(2) / 2, atol=1e-12)


class TestExpectation:
    """Expectation values must be real for Hermitian observables."""

    def test_real_value(self, singlet) -> None:
        zz = np.kron(pauli_direction(0.0), pauli_direction(0.0))
        assert expectation(singlet.rho, zz) == pytest.approx(-1.0)

    def test_complex_value_raises(self) -> None:
        psi = np.array([1, 1j]) / math.sqrt(2)
        rho = np.outer(psi, psi.conj())
        with pytest.raises(QCoreError, match='imaginary'):
            expectation(rho, np.array([[0, 1], [0, 0]]))

    def test_shape_mismatch_raises(self, singlet) -> None:
        with pytest.raises(QCoreError, match='Shape'):
            expectation(singlet.rho, np.eye(2))
