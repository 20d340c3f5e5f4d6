#!/usr/bin/env python3
"""
weakri: estimation pipeline

Turns coincidence tensors into the Bell-CHSH parameter B, Alice's local
correlation term Δ and the RI quantity, with a statistical and a calibration
uncertainty for each:

    1. calibrate()         pointer centres from the |H_A V_B⟩ / |V_A H_B⟩ runs
    2. shift_correction()  wave-plate displacement from the crystals-out runs
    3. moments()           monomial means and their per-event covariance
    4. chsh_estimate() / delta_estimate() / ri_estimate()

Statistical uncertainties propagate the per-event covariance of the monomial
vector through the estimator gradient (σ² = ∇ᵀ·Cov·∇ / N). Calibration
uncertainties propagate the twelve calibration constants in quadrature.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from loguru import logger

from weakri_theory import TSIRELSON, DegenerateSettingsError
from weakri_wmsim import COORDINATES, CoincidenceTensor, PixelGrid

log = logger.bind(component='estimation')

MONOMIALS = ('x_a', 'y_a', 'x_b', 'y_b',
             'x_a*y_a', 'x_a*x_b', 'x_a*y_b', 'y_a*x_b', 'y_a*y_b')
CALIBRATION_PARAMETERS = tuple(f'{kind}:{c}' for kind in ('unperturbed', 'shifted', 'hwp_shift')
                               for c in COORDINATES)

DEFAULT_SUBSETS = 10
MIN_COUNTS = 1000
SIGNIFICANCE = 3.0
FD_STEP = 1e-6

# Stage-1 couplings shift H along x, stage-2 couplings shift V along y, so the
# |H_A V_B⟩ run is the shifted one for x_A and y_B
SHIFTED_IN_HV = {'x_a': True, 'y_a': False, 'x_b': False, 'y_b': True}

# Sign of each A–B cross term in B = 4⟨...⟩ + 2
CHSH_CROSS_SIGNS = {'x_a*x_b': 1.0, 'x_a*y_b': -1.0, 'y_a*x_b': 1.0, 'y_a*y_b': 1.0}
CHSH_SINGLE_TERMS = ('y_a', 'x_b')


class CalibrationError(ValueError):
    """Raised when calibration runs give no significant or an inconsistent shift"""


class InsufficientCountsError(ValueError):
    """Raised when an acquisition holds too few counts for the requested fit"""


@dataclass
class CalibrationRecord:
    """
    Pointer centres per coordinate: unperturbed ζ̃0, shifted ζ̃1 and the
    wave-plate displacement ζ̃_shift, each with its uncertainty.
    """

    unperturbed: Dict[str, float]
    shifted: Dict[str, float]
    sigma_unperturbed: Dict[str, float]
    sigma_shifted: Dict[str, float]
    hwp_shift: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(COORDINATES, 0.0))
    sigma_hwp_shift: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(COORDINATES, 0.0))

    def __post_init__(self):
        for name in ('unperturbed', 'shifted', 'sigma_unperturbed', 'sigma_shifted',
                     'hwp_shift', 'sigma_hwp_shift'):
            missing = set(COORDINATES) - set(getattr(self, name))
            if missing:
                raise CalibrationError(f"{name} lacks {sorted(missing)}")
        for c in COORDINATES:
            if self.sigma_unperturbed[c] <= 0 or self.sigma_shifted[c] <= 0:
                raise CalibrationError(f"Centre uncertainties for {c} must be positive")
            if self.sigma_hwp_shift[c] < 0:
                raise CalibrationError(f"Shift uncertainty for {c} is negative")

    @property
    def g_est(self) -> Dict[str, float]:
        return {c: self.shifted[c] - self.unperturbed[c] for c in COORDINATES}

    @property
    def sigma_g(self) -> Dict[str, float]:
        return {c: math.hypot(self.sigma_shifted[c], self.sigma_unperturbed[c]) for c in COORDINATES}

    def with_hwp_shift(self, shift: Mapping[str, float], sigma: Mapping[str, float]) -> 'CalibrationRecord':
        return replace(self, hwp_shift=dict(shift), sigma_hwp_shift=dict(sigma))

    def parameters(self) -> np.ndarray:
        """Vector in CALIBRATION_PARAMETERS order"""
        return np.array([getattr(self, kind)[c] for kind in ('unperturbed', 'shifted', 'hwp_shift')
                         for c in COORDINATES])

    def uncertainties(self) -> np.ndarray:
        return np.array([getattr(self, kind)[c]
                         for kind in ('sigma_unperturbed', 'sigma_shifted', 'sigma_hwp_shift')
                         for c in COORDINATES])

    def to_record(self) -> Dict[str, Dict[str, float]]:
        return {
            'unperturbed': dict(self.unperturbed),
            'shifted': dict(self.shifted),
            'hwp_shift': dict(self.hwp_shift),
            'sigma_unperturbed': dict(self.sigma_unperturbed),
            'sigma_shifted': dict(self.sigma_shifted),
            'sigma_hwp_shift': dict(self.sigma_hwp_shift),
            'g_est': self.g_est,
            'sigma_g': self.sigma_g,
        }


@dataclass
class MomentSet:
    """
    Means of the monomials in MONOMIALS order and their per-event covariance.
    Positions are bin centres in the grid's length unit.
    """

    means: np.ndarray
    covariance: np.ndarray
    n_events: int
    pitch: float = 1.0

    def __getitem__(self, name: str) -> float:
        return float(self.means[MONOMIALS.index(name)])

    def variance(self, coordinate: str) -> float:
        """Per-event position variance V²_ζ"""
        i = MONOMIALS.index(coordinate)
        return float(self.covariance[i, i])

    def cross_covariance(self, first: str, second: str) -> float:
        """Per-event covariance σ_{ζζ'} between two coordinates"""
        return float(self.covariance[MONOMIALS.index(first), MONOMIALS.index(second)])

    @property
    def steps(self) -> np.ndarray:
        """Finite-difference steps: FD_STEP·pitch per unit of length dimension"""
        return np.array([FD_STEP * self.pitch ** (name.count('*') + 1) for name in MONOMIALS])


@dataclass
class ScalarEstimate:
    """
    One estimated quantity with its gradients, kept so that functions of
    several estimates can be propagated jointly.
    """

    value: float
    sigma_stat: float
    sigma_cal: float
    grad_moments: np.ndarray
    grad_calibration: np.ndarray
    moment_covariance: np.ndarray
    calibration_sigmas: np.ndarray

    @property
    def sigma_total(self) -> float:
        return math.sqrt(self.sigma_stat ** 2 + self.sigma_cal ** 2)

    @classmethod
    def from_gradients(cls, value: float, grad_moments: np.ndarray, grad_calibration: np.ndarray,
                       moment_covariance: np.ndarray, calibration_sigmas: np.ndarray) -> 'ScalarEstimate':
        variance_stat = float(grad_moments @ moment_covariance @ grad_moments)
        variance_cal = float(np.sum((grad_calibration * calibration_sigmas) ** 2))
        return cls(value, math.sqrt(max(variance_stat, 0.0)), math.sqrt(variance_cal),
                   grad_moments, grad_calibration, moment_covariance, calibration_sigmas)


@dataclass
class EstimateSet:
    B: ScalarEstimate
    Delta: ScalarEstimate
    RI: ScalarEstimate
    RI_B: ScalarEstimate
    RI_Delta: ScalarEstimate
    delta: Optional[float] = None

    @property
    def chsh_violation(self) -> float:
        """(|B| − 2) in units of σ_total; positive beyond the local-realist bound"""
        sigma = self.B.sigma_total
        excess = abs(self.B.value) - 2.0
        if sigma == 0:
            return math.copysign(math.inf, excess) if excess else 0.0
        return excess / sigma

    def to_record(self) -> Dict[str, Optional[float]]:
        """Flat record with the column heads of the published uncertainty tables"""
        record: Dict[str, Optional[float]] = {'delta': self.delta}
        for name in ('RI', 'RI_B', 'RI_Delta', 'B', 'Delta'):
            estimate: ScalarEstimate = getattr(self, name)
            record[name] = estimate.value
            record[f'sigma_{name}'] = estimate.sigma_total
            record[f'sigma_{name}_stat'] = estimate.sigma_stat
            record[f'sigma_{name}_cal'] = estimate.sigma_cal
        record['chsh_violation'] = self.chsh_violation
        return record


def _split_counts(counts: np.ndarray, n_parts: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Disjoint, near-equal random partition of a count array (multivariate hypergeometric)"""
    flat = np.asarray(counts, dtype=np.int64).ravel()
    total = int(flat.sum())
    sizes = [total // n_parts + (1 if k < total % n_parts else 0) for k in range(n_parts)]
    remaining = flat.copy()
    parts = []
    for size in sizes[:-1]:
        draw = rng.multivariate_hypergeometric(remaining, size)
        remaining -= draw
        parts.append(draw.reshape(counts.shape))
    parts.append(remaining.reshape(counts.shape))
    return parts


def split_tensor(tensor: CoincidenceTensor, n_parts: int, seed: int = 0) -> List[CoincidenceTensor]:
    rng = np.random.default_rng(seed)
    return [CoincidenceTensor(part, tensor.grid) for part in _split_counts(tensor.counts, n_parts, rng)]


def fit_centers(tensor: CoincidenceTensor, coordinate: str,
                n_subsets: int = DEFAULT_SUBSETS, seed: int = 0) -> Tuple[float, float]:
    """Subset-averaged centroid of one marginal and its standard error over the subsets"""
    if coordinate not in COORDINATES:
        raise ValueError(f"Unknown coordinate {coordinate!r}")
    if n_subsets < 2:
        raise ValueError("Centre uncertainty needs at least two subsets")

    marginal = tensor.marginal(coordinate)
    total = int(marginal.sum())
    if total < MIN_COUNTS:
        raise InsufficientCountsError(f"{coordinate} marginal holds {total} counts, "
                                      f"need at least {MIN_COUNTS}")

    rng = np.random.default_rng(seed)
    positions = tensor.grid.centers
    centroids = np.array([part @ positions / part.sum()
                          for part in _split_counts(marginal, n_subsets, rng)])
    return float(centroids.mean()), float(centroids.std(ddof=1) / math.sqrt(n_subsets))


def calibrate(acq_hv: CoincidenceTensor, acq_vh: CoincidenceTensor,
              n_subsets: int = DEFAULT_SUBSETS, seed: int = 0) -> CalibrationRecord:
    """
    Pointer centres from the two product-state runs. For every coordinate one
    run is shifted by the full coupling and the other is not; a significant
    negative difference means the inputs were swapped.
    """
    centres, sigmas = {}, {}
    for label, tensor in (('HV', acq_hv), ('VH', acq_vh)):
        for c in COORDINATES:
            centres[label, c], sigmas[label, c] = fit_centers(tensor, c, n_subsets, seed)

    unperturbed, shifted, sigma_unperturbed, sigma_shifted = {}, {}, {}, {}
    for c in COORDINATES:
        on, off = ('HV', 'VH') if SHIFTED_IN_HV[c] else ('VH', 'HV')
        shifted[c], sigma_shifted[c] = centres[on, c], sigmas[on, c]
        unperturbed[c], sigma_unperturbed[c] = centres[off, c], sigmas[off, c]

        g = shifted[c] - unperturbed[c]
        sigma_g = math.hypot(sigma_shifted[c], sigma_unperturbed[c])
        if abs(g) < SIGNIFICANCE * sigma_g:
            raise CalibrationError(f"Calibration failed on {c}: shift {g:.4g} ± {sigma_g:.2g} "
                                   f"is below {SIGNIFICANCE:g}σ")
        if g < 0:
            raise CalibrationError(f"Axis assignment failed on {c}: the {off} run is displaced by "
                                   f"{-g:.4g} relative to the {on} run; H/V inputs look swapped")
        log.info(f"✓ g[{c}] = {g:.5f} ± {sigma_g:.5f}")

    return CalibrationRecord(unperturbed, shifted, sigma_unperturbed, sigma_shifted)


def shift_correction(acq_measurement: CoincidenceTensor, acq_hv: CoincidenceTensor,
                     acq_vh: CoincidenceTensor, n_subsets: int = DEFAULT_SUBSETS,
                     seed: int = 0) -> Tuple[Dict[str, float], Dict[str, float]]:
    """
    Wave-plate displacement per coordinate from the three crystals-out runs:
    centroid at the measurement angles minus the mean centroid of the two
    zero-angle references.
    """
    shifts, sigmas = {}, {}
    for c in COORDINATES:
        moved, sigma_moved = fit_centers(acq_measurement, c, n_subsets, seed)
        ref_hv, sigma_hv = fit_centers(acq_hv, c, n_subsets, seed)
        ref_vh, sigma_vh = fit_centers(acq_vh, c, n_subsets, seed)
        shifts[c] = moved - (ref_hv + ref_vh) / 2
        sigmas[c] = math.sqrt(sigma_moved ** 2 + (sigma_hv ** 2 + sigma_vh ** 2) / 4)
    return shifts, sigmas


def _monomial_values(grid: PixelGrid) -> List[np.ndarray]:
    """Each monomial evaluated on the cell grid, broadcastable to the tensor shape"""
    positions = grid.centers
    coords = {c: positions.reshape([-1 if axis == i else 1 for axis in range(4)])
              for i, c in enumerate(COORDINATES)}
    values = []
    for name in MONOMIALS:
        value = np.ones((1, 1, 1, 1))
        for c in name.split('*'):
            value = value * coords[c]
        values.append(value)
    return values


def _weighted_moments(p: np.ndarray, grid: PixelGrid, n_events: int) -> MomentSet:
    values = _monomial_values(grid)
    means = np.array([np.sum(p * v) for v in values])
    covariance = np.empty((len(values), len(values)))
    for i, vi in enumerate(values):
        for j in range(i, len(values)):
            covariance[i, j] = covariance[j, i] = np.sum(p * vi * values[j]) - means[i] * means[j]
    return MomentSet(means, covariance, n_events, grid.pitch)


def moments(tensor: CoincidenceTensor) -> MomentSet:
    if tensor.total < 1:
        raise InsufficientCountsError("Moments need at least one count")
    return _weighted_moments(tensor.counts / tensor.total, tensor.grid, int(tensor.total))


def expected_moments(probs: np.ndarray, grid: PixelGrid) -> MomentSet:
    """Noise-free moments of a pixel probability tensor, normalised over the grid (n_events = 1)"""
    probs = np.asarray(probs, dtype=float)
    total = probs.sum()
    if total <= 0:
        raise InsufficientCountsError("Probability tensor carries no weight")
    return _weighted_moments(probs / total, grid, 1)


def _unpack(cal: np.ndarray):
    n = len(COORDINATES)
    unperturbed = dict(zip(COORDINATES, cal[:n]))
    shifted = dict(zip(COORDINATES, cal[n:2 * n]))
    hwp = dict(zip(COORDINATES, cal[2 * n:]))
    return unperturbed, shifted, hwp


def _chsh_value(mu: np.ndarray, cal: np.ndarray) -> float:
    """B = 4⟨x̂_A x̂_B/gg − x̂_A ŷ_B/gg + ŷ_A x̂_B/gg + ŷ_A ŷ_B/gg − ŷ_A/g − x̂_B/g⟩ + 2"""
    unperturbed, shifted, hwp = _unpack(cal)
    m = dict(zip(MONOMIALS, mu))
    centre = {c: unperturbed[c] + hwp[c] for c in COORDINATES}
    g = {c: shifted[c] - unperturbed[c] for c in COORDINATES}
    if any(value == 0 for value in g.values()):
        raise CalibrationError("A calibrated coupling is exactly zero")

    total = 0.0
    for pair, sign in CHSH_CROSS_SIGNS.items():
        a, b = pair.split('*')
        centred = m[pair] - centre[a] * m[b] - centre[b] * m[a] + centre[a] * centre[b]
        total += sign * centred / (g[a] * g[b])
    for c in CHSH_SINGLE_TERMS:
        total -= (m[c] - centre[c]) / g[c]
    return 4 * total + 2


def _chsh_moment_gradient(cal: np.ndarray) -> np.ndarray:
    """B is linear in the monomial means; these are its exact coefficients"""
    unperturbed, shifted, hwp = _unpack(cal)
    centre = {c: unperturbed[c] + hwp[c] for c in COORDINATES}
    g = {c: shifted[c] - unperturbed[c] for c in COORDINATES}
    grad = dict.fromkeys(MONOMIALS, 0.0)
    for pair, sign in CHSH_CROSS_SIGNS.items():
        a, b = pair.split('*')
        weight = 4 * sign / (g[a] * g[b])
        grad[pair] += weight
        grad[a] -= weight * centre[b]
        grad[b] -= weight * centre[a]
    for c in CHSH_SINGLE_TERMS:
        grad[c] -= 4 / g[c]
    return np.array([grad[name] for name in MONOMIALS])


def _delta_value(mu: np.ndarray, cal: np.ndarray) -> float:
    """Δ = C_xy / (2√(S_x·S_y)) on Alice's two axes"""
    unperturbed, shifted, hwp = _unpack(cal)
    m = dict(zip(MONOMIALS, mu))
    c_xy = m['x_a*y_a'] - m['x_a'] * m['y_a']
    s = {}
    for c in ('x_a', 'y_a'):
        s[c] = (m[c] - unperturbed[c] - hwp[c]) * (shifted[c] + hwp[c] - m[c])
        if s[c] <= 0:
            raise DegenerateSettingsError(f"S[{c}] = {s[c]:.3e} is not positive; Δ is undefined")
    return c_xy / (2 * math.sqrt(s['x_a'] * s['y_a']))


def _central_gradient(func, point: np.ndarray, steps: np.ndarray) -> np.ndarray:
    grad = np.empty(len(point))
    for i, h in enumerate(steps):
        up, down = point.copy(), point.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (func(up) - func(down)) / (2 * h)
    return grad


def _calibration_steps(m: MomentSet) -> np.ndarray:
    return np.full(len(CALIBRATION_PARAMETERS), FD_STEP * m.pitch)


def chsh_estimate(m: MomentSet, cal: CalibrationRecord) -> ScalarEstimate:
    """Operative B; moment gradient analytic, calibration gradient by central differences"""
    mu, params = m.means, cal.parameters()
    value = _chsh_value(mu, params)
    grad_mu = _chsh_moment_gradient(params)
    grad_cal = _central_gradient(lambda p: _chsh_value(mu, p), params, _calibration_steps(m))
    return ScalarEstimate.from_gradients(value, grad_mu, grad_cal,
                                         m.covariance / m.n_events, cal.uncertainties())


def delta_estimate(m: MomentSet, cal: CalibrationRecord) -> ScalarEstimate:
    """Δ; both gradients by central differences (only Alice's terms are nonzero)"""
    mu, params = m.means, cal.parameters()
    value = _delta_value(mu, params)
    grad_mu = _central_gradient(lambda x: _delta_value(x, params), mu, m.steps)
    grad_cal = _central_gradient(lambda p: _delta_value(mu, p), params, _calibration_steps(m))
    return ScalarEstimate.from_gradients(value, grad_mu, grad_cal,
                                         m.covariance / m.n_events, cal.uncertainties())


def ri_estimate(b: ScalarEstimate, delta: ScalarEstimate) -> EstimateSet:
    """
    RI = (B/2√2)² + Δ². Gradients are combined before propagation, so the
    correlation between B and Δ through shared moments and calibration
    constants is kept.
    """
    ri_b_value = (b.value / TSIRELSON) ** 2
    ri_delta_value = delta.value ** 2

    def propagated(value, scale_b, scale_delta) -> ScalarEstimate:
        return ScalarEstimate.from_gradients(
            value,
            scale_b * b.grad_moments + scale_delta * delta.grad_moments,
            scale_b * b.grad_calibration + scale_delta * delta.grad_calibration,
            b.moment_covariance,
            b.calibration_sigmas,
        )

    d_ri_d_b = b.value / 4
    d_ri_d_delta = 2 * delta.value
    return EstimateSet(
        B=b,
        Delta=delta,
        RI=propagated(ri_b_value + ri_delta_value, d_ri_d_b, d_ri_d_delta),
        RI_B=propagated(ri_b_value, d_ri_d_b, 0.0),
        RI_Delta=propagated(ri_delta_value, 0.0, d_ri_d_delta),
    )


def estimate(m: MomentSet, cal: CalibrationRecord, delta: Optional[float] = None) -> EstimateSet:
    estimates = ri_estimate(chsh_estimate(m, cal), delta_estimate(m, cal))
    estimates.delta = delta
    return estimates
