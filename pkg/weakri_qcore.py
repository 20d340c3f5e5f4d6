#!/usr/bin/env python3
"""
weakri: exact two-qubit kernel

Polarization states are 4x4 complex density matrices in A⊗B ordering with the
{H, V} basis on each photon. Observables live in the real (σ_z, σ_x) plane of
the Bloch sphere, so every angle uses the polarization double-angle convention.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eigvalsh

ComplexMatrix = NDArray[np.complex128]
Subsystem = Literal['A', 'B']

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
EXPECTATION_IMAG_TOL = 1e-10

IDENTITY_2: ComplexMatrix = np.eye(2, dtype=complex)
SIGMA_Z: ComplexMatrix = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_X: ComplexMatrix = np.array([[0, 1], [1, 0]], dtype=complex)

H_KET = np.array([1, 0], dtype=complex)
V_KET = np.array([0, 1], dtype=complex)


class QCoreError(ValueError):
    """Raised on dimension mismatches or non-Hermitian observables"""


def as_matrix(values) -> ComplexMatrix:
    """Copy `values` into a 2D complex array, rejecting other shapes"""
    matrix = np.array(values, dtype=complex)
    if matrix.ndim != 2:
        raise QCoreError(f"Expected a 2D matrix, got shape {matrix.shape}")
    return matrix


def is_hermitian(matrix: ComplexMatrix, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(matrix - matrix.conj().T)) <= tol)


def pauli_direction(theta: float) -> ComplexMatrix:
    """σ_z(θ) = cos(2θ)·σ_z + sin(2θ)·σ_x"""
    return np.cos(2 * theta) * SIGMA_Z + np.sin(2 * theta) * SIGMA_X


def projector(theta: float) -> ComplexMatrix:
    """Π(θ) = (I + σ_z(θ)) / 2, the projector on the linear polarization at angle θ"""
    return (IDENTITY_2 + pauli_direction(theta)) / 2


def polarization_ket(theta: float) -> NDArray[np.complex128]:
    """Eigenvector of Π(θ) with eigenvalue 1"""
    return np.array([np.cos(theta), np.sin(theta)], dtype=complex)


def tensor_product(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    return np.kron(as_matrix(a), as_matrix(b))


def partial_trace(rho: ComplexMatrix, keep: Subsystem) -> ComplexMatrix:
    """Reduce a two-qubit density matrix to the qubit named by `keep`"""
    rho = as_matrix(rho)
    if rho.shape != (4, 4):
        raise QCoreError(f"partial_trace expects a 4x4 matrix, got {rho.shape}")

    blocks = rho.reshape(2, 2, 2, 2)  # (a, b, a', b')
    if keep == 'A':
        return np.einsum('ijkj->ik', blocks)
    if keep == 'B':
        return np.einsum('ijil->jl', blocks)
    raise QCoreError(f"Unknown subsystem: {keep}")


def expectation(rho: ComplexMatrix, obs: ComplexMatrix) -> float:
    """Tr(ρ·O) for Hermitian O; a sizeable imaginary part means a broken observable"""
    rho = as_matrix(rho)
    obs = as_matrix(obs)
    if rho.shape != obs.shape:
        raise QCoreError(f"Shape mismatch: state {rho.shape} vs observable {obs.shape}")

    value = np.trace(rho @ obs)
    if abs(value.imag) > EXPECTATION_IMAG_TOL:
        raise QCoreError(f"Expectation value has imaginary part {value.imag:.3e}; "
                         "observable is not Hermitian")
    return float(value.real)


def min_eigenvalue(matrix: ComplexMatrix) -> float:
    """Smallest eigenvalue of the Hermitian part of `matrix`"""
    matrix = as_matrix(matrix)
    hermitian_part = (matrix + matrix.conj().T) / 2
    return float(eigvalsh(hermitian_part)[0])


def purity(rho: ComplexMatrix) -> float:
    return float(np.real(np.trace(rho @ rho)))


def random_density_matrix(rng: np.random.Generator, dim: int = 4) -> ComplexMatrix:
    """Ginibre sample: normalized G·G† with complex Gaussian G"""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


@dataclass(frozen=True, eq=False)
class PolarizationState:
    """
    Two-photon polarization density matrix.

    `visibility` is set for states built from the Werner model (singlet
    included) and None for anything else.
    """

    rho: ComplexMatrix
    visibility: Optional[float] = None
    label: Optional[str] = field(default=None)

    def __post_init__(self):
        rho = as_matrix(self.rho)
        if rho.shape != (4, 4):
            raise QCoreError(f"Polarization state must be 4x4, got {rho.shape}")
        if not is_hermitian(rho):
            raise QCoreError("Polarization state is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > HERMITIAN_TOL:
            raise QCoreError(f"Polarization state trace is {np.trace(rho).real}")
        if min_eigenvalue(rho) < -PSD_TOL:
            raise QCoreError("Polarization state has negative eigenvalues")
        if self.visibility is not None:
            if not 0.0 <= self.visibility <= 1.0:
                raise QCoreError(f"Visibility {self.visibility} outside [0, 1]")
            if self.visibility == 1.0 and abs(purity(rho) - 1.0) > HERMITIAN_TOL:
                raise QCoreError("Unit visibility requires a pure state")
        rho.setflags(write=False)
        object.__setattr__(self, 'rho', rho)

    @classmethod
    def singlet(cls) -> 'PolarizationState':
        psi = (np.kron(H_KET, V_KET) - np.kron(V_KET, H_KET)) / np.sqrt(2)
        return cls(np.outer(psi, psi.conj()), 1.0, 'singlet')

    @classmethod
    def werner(cls, visibility: float) -> 'PolarizationState':
        """V·|ψ⁻⟩⟨ψ⁻| + (1−V)·I/4"""
        if not 0.0 <= visibility <= 1.0:
            raise QCoreError(f"Visibility {visibility} outside [0, 1]")
        rho = visibility * cls.singlet().rho + (1 - visibility) * np.eye(4) / 4
        return cls(rho, visibility, f'werner({visibility:g})')

    @classmethod
    def from_kets(cls, ket_a, ket_b) -> 'PolarizationState':
        psi = np.kron(np.asarray(ket_a, dtype=complex), np.asarray(ket_b, dtype=complex))
        return cls(np.outer(psi, psi.conj()), None, 'product')

    @classmethod
    def random(cls, rng: np.random.Generator) -> 'PolarizationState':
        return cls(random_density_matrix(rng), None, 'ginibre')

    @property
    def purity(self) -> float:
        return purity(self.rho)

    def reduced(self, keep: Subsystem) -> ComplexMatrix:
        return partial_trace(self.rho, keep)
