#!/usr/bin/env python3
"""
weakri: exact quantum oracle

Every quantity the weak-measurement experiment estimates, evaluated exactly on
a two-qubit polarization state: correlators, the Bell-CHSH parameter, Alice's
local correlation term, the RI bound and the covariance-matrix chain it is
derived from, plus the small-Ω expansion of the output-state purity.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from weakri_qcore import (
    IDENTITY_2,
    PolarizationState,
    min_eigenvalue,
    pauli_direction,
    projector,
    tensor_product,
)

PARTIES = ('A', 'B')
STAGES = (1, 2)
COUPLING_KEYS: Tuple[Tuple[str, int], ...] = tuple((p, j) for p in PARTIES for j in STAGES)

WEAK_REGIME_WARN = 0.2
WEAK_REGIME_MAX = 0.5
RATIO_TOL = 1e-9
DEGENERATE_STD = 1e-8
TSIRELSON = 2 * math.sqrt(2)

# Calibration acquisitions run with stage-1 projecting on H and stage-2 on V
CALIBRATION_ANGLES = {1: 0.0, 2: math.pi / 2}


class DegenerateSettingsError(ValueError):
    """Raised when a local variance vanishes and Δ is undefined"""


class CouplingError(ValueError):
    """Raised when a coupling length is negative or outside the simulated weak regime"""


@dataclass(frozen=True)
class MeasurementSettings:
    """
    Angles of the four weak couplings, their lengths and the pointer width.

    Angles are in radians, `g` and `sigma` share one length unit (pixel pitch
    throughout the simulator). `g` maps (party, stage) to the coupling length.
    """

    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    g: Dict[Tuple[str, int], float]
    sigma: float
    delta: Optional[float] = None
    label: str = field(default='custom', compare=False)

    def __post_init__(self):
        if self.sigma <= 0:
            raise CouplingError(f"Pointer width must be positive, got {self.sigma}")
        missing = [key for key in COUPLING_KEYS if key not in self.g]
        if missing:
            raise CouplingError(f"Missing couplings for {missing}")

        for (party, stage), g in self.g.items():
            ratio = g / self.sigma
            if g < 0:
                raise CouplingError(f"Coupling g[{party}{stage}] = {g} is negative")
            if ratio > WEAK_REGIME_MAX + RATIO_TOL:
                raise CouplingError(f"g[{party}{stage}]/σ = {ratio:.3f} exceeds the "
                                    f"simulator limit {WEAK_REGIME_MAX}")
            if ratio > WEAK_REGIME_WARN + RATIO_TOL:
                logger.warning(f"g[{party}{stage}]/σ = {ratio:.3f} is outside the weak "
                               f"regime (≤ {WEAK_REGIME_WARN})")

    @classmethod
    def standard(cls, delta: float, g_over_sigma: float = 0.2, sigma: float = 3.0,
                 g: Optional[Dict[Tuple[str, int], float]] = None) -> 'MeasurementSettings':
        """α1=0, α2=π/4+δ, β1=π/8, β2=3π/8+δ"""
        couplings = dict(g) if g is not None else {key: g_over_sigma * sigma for key in COUPLING_KEYS}
        return cls(
            alpha1=0.0,
            alpha2=math.pi / 4 + delta,
            beta1=math.pi / 8,
            beta2=3 * math.pi / 8 + delta,
            g=couplings,
            sigma=sigma,
            delta=delta,
            label='standard',
        )

    @classmethod
    def calibration(cls, g: Dict[Tuple[str, int], float], sigma: float) -> 'MeasurementSettings':
        return cls(
            alpha1=CALIBRATION_ANGLES[1],
            alpha2=CALIBRATION_ANGLES[2],
            beta1=CALIBRATION_ANGLES[1],
            beta2=CALIBRATION_ANGLES[2],
            g=dict(g),
            sigma=sigma,
            label='calibration',
        )

    def angle(self, party: str, stage: int) -> float:
        return {
            ('A', 1): self.alpha1,
            ('A', 2): self.alpha2,
            ('B', 1): self.beta1,
            ('B', 2): self.beta2,
        }[(party, stage)]

    def coupling(self, party: str, stage: int) -> float:
        return self.g[(party, stage)]

    def with_couplings(self, scale: float) -> 'MeasurementSettings':
        """Same angles, every coupling multiplied by `scale`"""
        return MeasurementSettings(
            self.alpha1, self.alpha2, self.beta1, self.beta2,
            {key: value * scale for key, value in self.g.items()},
            self.sigma, self.delta, self.label,
        )


@dataclass
class CovarianceReport:
    """
    Covariance matrices of Alice's and Bob's projectors and the inequality
    chain leading from them to the RI bound.

    `lambda_full` is ordered (B1, B2, A1, A2); `lambda_sub[j]` is (B_j, A1, A2)
    with r = r^Q; `pearson[j-1][i-1]` correlates B_j with A_i. `chain` maps
    'pair_1', 'pair_2', 'chsh_sum', 'ri_bound' to (lhs, rhs) pairs with lhs ≤ rhs.
    When a local variance vanishes the report is marked undefined: Pearson
    coefficients and the chain are left empty and `ri` keeps only the
    nonlocal term.
    """

    lambda_full: np.ndarray
    lambda_sub: Dict[int, np.ndarray]
    rq: float
    chsh: float
    min_eigenvalues: Dict[str, float]
    defined: bool = True
    pearson: Optional[np.ndarray] = None
    chsh_pearson: Optional[float] = None
    ri: Optional[float] = None
    chain: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def chain_holds(self, tol: float = 1e-9) -> bool:
        return all(lhs <= rhs + tol for lhs, rhs in self.chain.values())

    def worst_margin(self) -> float:
        """Smallest rhs − lhs over the chain (inf when the chain is empty)"""
        if not self.chain:
            return math.inf
        return min(rhs - lhs for lhs, rhs in self.chain.values())


def _alice_operator(theta: float) -> np.ndarray:
    return tensor_product(projector(theta), IDENTITY_2)


def _bob_operator(theta: float) -> np.ndarray:
    return tensor_product(IDENTITY_2, projector(theta))


def _mean(rho: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ op)))


def _symmetrized_covariance(rho: np.ndarray, ops) -> np.ndarray:
    """Γ_kl = Re⟨O_k O_l⟩ − ⟨O_k⟩⟨O_l⟩"""
    means = np.array([_mean(rho, op) for op in ops])
    size = len(ops)
    gamma = np.empty((size, size))
    for k in range(size):
        for l in range(size):
            gamma[k, l] = np.real(np.trace(rho @ ops[k] @ ops[l])) - means[k] * means[l]
    return (gamma + gamma.T) / 2


def correlator(state: PolarizationState, alpha: float, beta: float) -> float:
    """Tr[ρ·Π(α)⊗Π(β)], the strong-measurement target of the weak cross-correlations"""
    return _mean(state.rho, tensor_product(projector(alpha), projector(beta)))


def pm_correlator(state: PolarizationState, alpha: float, beta: float) -> float:
    """⟨σ(α)⊗σ(β)⟩ for the ±1-valued polarization observables"""
    return _mean(state.rho, tensor_product(pauli_direction(alpha), pauli_direction(beta)))


def chsh_theory(state: PolarizationState, s: MeasurementSettings) -> float:
    """B = E(α1,β1) − E(α1,β2) + E(α2,β1) + E(α2,β2)"""
    return (pm_correlator(state, s.alpha1, s.beta1)
            - pm_correlator(state, s.alpha1, s.beta2)
            + pm_correlator(state, s.alpha2, s.beta1)
            + pm_correlator(state, s.alpha2, s.beta2))


def rq_theory(state: PolarizationState, alpha1: float, alpha2: float) -> float:
    """r^Q = ⟨{Π(α1), Π(α2)}⟩/2 − ⟨Π(α1)⟩⟨Π(α2)⟩ on Alice's reduced state"""
    rho_a = state.reduced('A')
    p1, p2 = projector(alpha1), projector(alpha2)
    anticommutator = np.real(np.trace(rho_a @ (p1 @ p2 + p2 @ p1))) / 2
    return float(anticommutator - np.real(np.trace(rho_a @ p1)) * np.real(np.trace(rho_a @ p2)))


def _projector_std(rho_reduced: np.ndarray, theta: float) -> float:
    p = float(np.real(np.trace(rho_reduced @ projector(theta))))
    return math.sqrt(max(p - p * p, 0.0))


def delta_theory(state: PolarizationState, s: MeasurementSettings) -> float:
    """Δ = r^Q / (2·Δ_A1·Δ_A2), half the Pearson correlation of Alice's two projectors"""
    rho_a = state.reduced('A')
    std1 = _projector_std(rho_a, s.alpha1)
    std2 = _projector_std(rho_a, s.alpha2)
    if std1 < DEGENERATE_STD or std2 < DEGENERATE_STD:
        raise DegenerateSettingsError(
            f"Alice's projector variance vanishes (Δ_A1={std1:.2e}, Δ_A2={std2:.2e}); Δ is undefined")
    return rq_theory(state, s.alpha1, s.alpha2) / (2 * std1 * std2)


def ri_split(chsh: float, delta: float) -> Tuple[float, float]:
    """(RI_B, RI_Δ) = (|B/2√2|², Δ²)"""
    return (chsh / TSIRELSON) ** 2, delta ** 2


def ri_theory(state: PolarizationState, s: MeasurementSettings) -> float:
    ri_b, ri_delta = ri_split(chsh_theory(state, s), delta_theory(state, s))
    return ri_b + ri_delta


def covariance_report(state: PolarizationState, s: MeasurementSettings) -> CovarianceReport:
    """Build Λ_AB and both Λ^j_AB, then evaluate the Schur-complement chain up to the RI bound"""
    rho = state.rho
    ops = [_bob_operator(s.beta1), _bob_operator(s.beta2),
           _alice_operator(s.alpha1), _alice_operator(s.alpha2)]
    lambda_full = _symmetrized_covariance(rho, ops)

    rq = rq_theory(state, s.alpha1, s.alpha2)
    lambda_sub = {}
    for j in STAGES:
        bob = j - 1
        sub = lambda_full[np.ix_([bob, 2, 3], [bob, 2, 3])].copy()
        sub[1, 2] = sub[2, 1] = rq
        lambda_sub[j] = sub

    min_eigs = {'lambda_full': min_eigenvalue(lambda_full)}
    for j, sub in lambda_sub.items():
        min_eigs[f'lambda_sub_{j}'] = min_eigenvalue(sub)

    chsh = chsh_theory(state, s)
    stds = np.sqrt(np.clip(np.diag(lambda_full), 0.0, None))
    report = CovarianceReport(
        lambda_full=lambda_full,
        lambda_sub=lambda_sub,
        rq=rq,
        chsh=chsh,
        min_eigenvalues=min_eigs,
    )

    if np.any(stds < DEGENERATE_STD):
        report.defined = False
        report.ri = (chsh / TSIRELSON) ** 2
        return report

    std_b, std_a = stds[:2], stds[2:]
    pearson = lambda_full[:2, 2:] / np.outer(std_b, std_a)
    c = rq / (std_a[0] * std_a[1])

    chain = {}
    terms = []
    for j in STAGES:
        sign = 1.0 if j == 1 else -1.0
        term = pearson[j - 1, 1] + sign * pearson[j - 1, 0]
        terms.append(term)
        chain[f'pair_{j}'] = (term ** 2, 2 * (1 + sign * c))

    chsh_pearson = float(sum(terms))
    chain['chsh_sum'] = (abs(chsh_pearson),
                     math.sqrt(2) * sum(math.sqrt(max(1 + sign * c, 0.0)) for sign in (1.0, -1.0)))
    ri_pearson = (chsh_pearson / TSIRELSON) ** 2 + (c / 2) ** 2
    chain['ri_bound'] = (ri_pearson, 1.0)

    report.pearson = pearson
    report.chsh_pearson = chsh_pearson
    report.ri = ri_pearson
    report.chain = chain
    return report


def decoherence_parameter(g: float, sigma: float) -> float:
    """Ω = 1 − exp(−g²/8σ²)"""
    return -math.expm1(-g * g / (8 * sigma * sigma))


def purity_expansion(omega: float, alpha1: float, alpha2: float,
                     beta1: float, beta2: float) -> float:
    """Output-state purity of the weakly measured singlet to second order in Ω"""
    if not 0.0 <= omega < 1.0:
        raise ValueError(f"Ω must lie in [0, 1), got {omega}")
    pairs = [(alpha1, alpha2), (alpha1, beta1), (alpha2, beta1),
             (alpha1, beta2), (alpha2, beta2), (beta1, beta2)]
    angular = 22 + sum(math.cos(4 * (a - b)) for a, b in pairs)
    return 1 - 4 * omega + 0.5 * omega * omega * angular


def diagonal_visibility(state: PolarizationState) -> float:
    """(N(+,−)+N(−,+)−N(+,+)−N(−,−))/ΣN evaluated on exact diagonal-basis probabilities"""
    plus, minus = math.pi / 4, -math.pi / 4
    n = {(a, b): correlator(state, ta, tb)
         for a, ta in (('+', plus), ('-', minus))
         for b, tb in (('+', plus), ('-', minus))}
    return visibility_from_counts(n[('+', '-')], n[('-', '+')], n[('+', '+')], n[('-', '-')])


def visibility_from_counts(n_pm: float, n_mp: float, n_pp: float, n_mm: float) -> float:
    total = n_pm + n_mp + n_pp + n_mm
    if total <= 0:
        raise ValueError("Visibility needs at least one count")
    return (n_pm + n_mp - n_pp - n_mm) / total


def weak_moment_predictions(state: PolarizationState, s: MeasurementSettings) -> Dict[str, float]:
    """
    First-order weak-coupling predictions for the pointer moments, measured
    from the unperturbed beam centre: single moments g·⟨Π⟩, A–B cross
    moments g·g'·⟨Π⊗Π⟩ and Alice's sequential moment g·g'·⟨{Π1,Π2}⟩/2.
    """
    rho = state.rho
    axes = {'x_a': ('A', 1), 'y_a': ('A', 2), 'x_b': ('B', 1), 'y_b': ('B', 2)}
    ops = {name: (_alice_operator if party == 'A' else _bob_operator)(s.angle(party, stage))
           for name, (party, stage) in axes.items()}
    g = {name: s.coupling(*key) for name, key in axes.items()}

    predictions = {name: g[name] * _mean(rho, ops[name]) for name in axes}
    for a in ('x_a', 'y_a'):
        for b in ('x_b', 'y_b'):
            predictions[f'{a}*{b}'] = g[a] * g[b] * _mean(rho, ops[a] @ ops[b])
    anticommutator = ops['x_a'] @ ops['y_a'] + ops['y_a'] @ ops['x_a']
    predictions['x_a*y_a'] = g['x_a'] * g['y_a'] * _mean(rho, anticommutator) / 2
    return predictions


def theory_curve(visibility: float, deltas: Iterable[float]) -> pd.DataFrame:
    """B, Δ and the RI split on the default measurement bases for a Werner source"""
    state = PolarizationState.werner(visibility)
    rows = []
    for delta in deltas:
        s = MeasurementSettings.standard(float(delta))
        chsh = chsh_theory(state, s)
        delta_value = delta_theory(state, s)
        ri_b, ri_delta = ri_split(chsh, delta_value)
        rows.append({
            'delta': float(delta),
            'B_theory': chsh,
            'Delta_theory': delta_value,
            'RI_theory': ri_b + ri_delta,
            'RI_B_theory': ri_b,
            'RI_Delta_theory': ri_delta,
        })
    return pd.DataFrame(rows)
