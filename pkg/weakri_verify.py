#!/usr/bin/env python3
"""
weakri: verification batteries

1. Covariance chain: random two-qubit states and random measurement angles;
   every Λ matrix must be PSD, every inequality of the Schur-complement chain
   must hold, |B| and its correlation form must respect Tsirelson's bound, and
   the correlation form of RI must stay in [0, 1].
2. Purity expansion: the exact pointer-traced purity of a weakly measured
   singlet must differ from its second-order Ω expansion by O(Ω³), checked by
   halving Ω and requiring the residual to drop by a factor in [6, 10].
3. Werner output purity: never above the input purity, and close to 0.96
   for the reference source.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from loguru import logger as root_logger

from weakri_qcore import PolarizationState
from weakri_theory import (
    COUPLING_KEYS,
    TSIRELSON,
    MeasurementSettings,
    covariance_report,
    decoherence_parameter,
    purity_expansion,
)
from weakri_wmsim import apply_settings, initial_state, reduced_polarization_state

PSD_TOL = 1e-9
BOUND_TOL = 1e-9
RATIO_RANGE = (6.0, 10.0)
DEFAULT_STATES = 10_000
DEFAULT_G_OVER_SIGMA = (0.05, 0.1, 0.2)
WERNER_PURITY_RANGE = (0.955, 0.965)
REFERENCE_VISIBILITY = 0.983


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ''


@dataclass
class VerifyReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, passed: bool, margin: float, detail: str = '') -> CheckResult:
        check = CheckResult(name, bool(passed), float(margin), detail)
        self.checks.append(check)
        return check

    def to_text(self) -> str:
        lines = ['weakri verification report', '=' * 60]
        for check in self.checks:
            mark = 'PASS' if check.passed else 'FAIL'
            lines.append(f"[{mark}] {check.name}: worst margin {check.margin:.3e}")
            if check.detail:
                lines.append(f"       {check.detail}")
        lines.append('=' * 60)
        passed = sum(check.passed for check in self.checks)
        lines.append(f"{passed}/{len(self.checks)} checks passed; overall {'PASS' if self.passed else 'FAIL'}")
        return '\n'.join(lines) + '\n'

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path


def random_settings(rng: np.random.Generator, sigma: float = 3.0) -> MeasurementSettings:
    alpha1, alpha2, beta1, beta2 = rng.uniform(0.0, math.pi, size=4)
    return MeasurementSettings(alpha1, alpha2, beta1, beta2,
                               dict.fromkeys(COUPLING_KEYS, 0.1 * sigma), sigma, label='random')


def check_covariance_chain(report: VerifyReport, n_states: int = DEFAULT_STATES, seed: int = 0, logger=None):
    logger = logger or root_logger.bind(component='verify')
    rng = np.random.default_rng(seed)
    worst_eig = math.inf
    worst_chain = math.inf
    worst_tsirelson = math.inf
    worst_ri = math.inf
    worst_pearson = math.inf
    degenerate = 0

    for _ in range(n_states):
        state = PolarizationState.random(rng)
        result = covariance_report(state, random_settings(rng))
        worst_eig = min(worst_eig, min(result.min_eigenvalues.values()))
        worst_tsirelson = min(worst_tsirelson, TSIRELSON - abs(result.chsh))
        if not result.defined:
            degenerate += 1
            continue
        worst_chain = min(worst_chain, result.worst_margin())
        worst_pearson = min(worst_pearson, TSIRELSON - abs(result.chsh_pearson))
        worst_ri = min(worst_ri, result.ri, 1.0 - result.ri)

    report.add('Λ matrices positive semidefinite', worst_eig >= -PSD_TOL, worst_eig,
               f"{n_states} random states, smallest eigenvalue {worst_eig:.3e}")
    report.add('Schur-complement chain inequalities', worst_chain >= -BOUND_TOL, worst_chain,
               f"{n_states - degenerate} defined cases, {degenerate} degenerate skipped")
    report.add('Tsirelson bound |B| ≤ 2√2', worst_tsirelson >= -BOUND_TOL, worst_tsirelson)
    report.add('Correlation-form CHSH sum ≤ 2√2', worst_pearson >= -BOUND_TOL, worst_pearson,
               "Pearson coefficients of the projectors in place of the ±1 correlators")
    report.add('RI within [0, 1]', worst_ri >= -BOUND_TOL, worst_ri)
    logger.info(f"Covariance chain: {n_states} states, {degenerate} degenerate")


def exact_singlet_purity(g: float, sigma: float, delta: float = 0.0) -> float:
    settings = MeasurementSettings.standard(delta, sigma=sigma, g=dict.fromkeys(COUPLING_KEYS, g))
    _, value = reduced_polarization_state(apply_settings(initial_state(1.0, sigma), settings))
    return value


def coupling_for_omega(omega: float, sigma: float) -> float:
    """Inverse of Ω = 1 − exp(−g²/8σ²)"""
    return sigma * math.sqrt(-8 * math.log1p(-omega))


def expansion_residual(g: float, sigma: float, delta: float = 0.0) -> float:
    settings = MeasurementSettings.standard(delta, sigma=sigma)
    omega = decoherence_parameter(g, sigma)
    expansion = purity_expansion(omega, settings.alpha1, settings.alpha2, settings.beta1, settings.beta2)
    return exact_singlet_purity(g, sigma, delta) - expansion


def check_purity_ratio(report: VerifyReport, g_over_sigma: Sequence[float] = DEFAULT_G_OVER_SIGMA,
                       sigma: float = 3.0):
    low, high = RATIO_RANGE
    for ratio in g_over_sigma:
        g = ratio * sigma
        half = coupling_for_omega(decoherence_parameter(g, sigma) / 2, sigma)
        factor = expansion_residual(g, sigma) / expansion_residual(half, sigma)
        report.add(f'Purity residual O(Ω³) at g/σ={ratio:g}', low <= factor <= high,
                   min(factor - low, high - factor), f"residual ratio under Ω halving: {factor:.3f}")

    exact_zero = exact_singlet_purity(0.0, sigma)
    report.add('Ω = 0 expansion equals exact purity', abs(exact_zero - 1.0) <= 1e-12,
               1e-12 - abs(exact_zero - 1.0))


def check_werner_purity(report: VerifyReport, visibility: float, g_over_sigma: float, sigma: float = 3.0):
    """Decoherence never raises purity; at the reference source it lands near 0.96"""
    settings = MeasurementSettings.standard(0.0, g_over_sigma=g_over_sigma, sigma=sigma)
    state_in = PolarizationState.werner(visibility)
    _, value = reduced_polarization_state(apply_settings(initial_state(visibility, sigma), settings))
    report.add(f'Output purity of Werner({visibility:g}) below input purity',
               value <= state_in.purity + 1e-12, state_in.purity - value,
               f"purity {state_in.purity:.5f} -> {value:.5f}")

    if math.isclose(visibility, REFERENCE_VISIBILITY) and math.isclose(g_over_sigma, 0.2):
        low, high = WERNER_PURITY_RANGE
        report.add(f'Output purity of Werner({visibility:g}) at g/σ={g_over_sigma:g} near 0.96',
                   low <= value <= high, min(value - low, high - value), f"purity {value:.5f}")


def verify(n_states: int = DEFAULT_STATES, seed: int = 0, visibility: float = 0.983,
           g_over_sigma: float = 0.2, sigma: float = 3.0, logger=None) -> VerifyReport:
    """Run all batteries; failures are report content, never exceptions"""
    logger = logger or root_logger.bind(component='verify')
    report = VerifyReport()

    logger.info("[1/3] Covariance chain on random states...")
    check_covariance_chain(report, n_states, seed, logger)
    logger.info("[2/3] Purity expansion ratio test...")
    check_purity_ratio(report, sigma=sigma)
    logger.info("[3/3] Werner output purity...")
    check_werner_purity(report, visibility, g_over_sigma, sigma)

    for check in report.checks:
        mark = '✓' if check.passed else '✗'
        logger.info(f"{mark} {check.name} (margin {check.margin:.3e})")
    return report
