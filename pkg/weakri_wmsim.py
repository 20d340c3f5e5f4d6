#!/usr/bin/env python3
"""
weakri: weak-measurement simulator

Each photon carries two Gaussian pointer coordinates (x, y). A weak coupling
translates the pointer by g on the component of the polarization that passes
Π(θ), so a pure input evolves into a short list of branches
(amplitude, polarization index, shift vector) in a known polarization frame.
Everything downstream (pixel probabilities, continuous pointer moments, the
reduced polarization state) is evaluated in closed form from those branches.
Mixed inputs are convex sums of pure Bell components.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import erf, erfc

from weakri_qcore import H_KET, V_KET, PolarizationState, polarization_ket, purity
from weakri_theory import COUPLING_KEYS, CouplingError, MeasurementSettings

log = logger.bind(component='wmsim')

COORDINATES = ('x_a', 'y_a', 'x_b', 'y_b')
COUPLING_COORDINATE = {('A', 1): 0, ('A', 2): 1, ('B', 1): 2, ('B', 2): 3}

DEFAULT_SIGMA = 3.0
DEFAULT_PIXELS = 24
AMPLITUDE_TOL = 1e-14
NORM_TOL = 1e-10
MAX_BRANCHES = 16
COVERAGE_SIGMAS = 4.0
TRUNCATION_PER_AXIS = 1e-4
NEGATIVE_PROB_TOL = 1e-12

# Substream ids per acquisition; the δ index of a sweep is the second spawn key
STREAM_IDS = {
    'calib-HV': 0,
    'calib-VH': 1,
    'main': 2,
    'nocrystal-1': 3,
    'nocrystal-2': 4,
    'nocrystal-3': 5,
}

_SQRT_HALF = 1 / math.sqrt(2)
BELL_VECTORS = {
    'psi-': (np.kron(H_KET, V_KET) - np.kron(V_KET, H_KET)) * _SQRT_HALF,
    'psi+': (np.kron(H_KET, V_KET) + np.kron(V_KET, H_KET)) * _SQRT_HALF,
    'phi-': (np.kron(H_KET, H_KET) - np.kron(V_KET, V_KET)) * _SQRT_HALF,
    'phi+': (np.kron(H_KET, H_KET) + np.kron(V_KET, V_KET)) * _SQRT_HALF,
}


class CoverageError(ValueError):
    """Raised when the pixel grid truncates too much of a pointer distribution"""


def eigenframe(theta: float) -> np.ndarray:
    """Columns: the Π(θ) eigenvectors with eigenvalue 1 and 0"""
    return np.column_stack([polarization_ket(theta), polarization_ket(theta + math.pi / 2)])


@dataclass(frozen=True)
class Branch:
    amplitude: complex
    pol_a: int
    pol_b: int
    shift: Tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class BranchState:
    """
    Pure two-photon state with pointers, as a superposition of branches.

    Branch polarization indices refer to the columns of `frame_a` / `frame_b`.
    `applied` records which (party, stage) couplings have already acted.
    """

    branches: Tuple[Branch, ...]
    frame_a: np.ndarray
    frame_b: np.ndarray
    sigma: float
    applied: FrozenSet[Tuple[str, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.sigma <= 0:
            raise CouplingError(f"Pointer width must be positive, got {self.sigma}")
        for name, frame in (('frame_a', self.frame_a), ('frame_b', self.frame_b)):
            if frame.shape != (2, 2) or not np.allclose(frame.conj().T @ frame, np.eye(2), atol=NORM_TOL):
                raise ValueError(f"{name} is not a 2x2 unitary frame")
        if len(self.branches) > MAX_BRANCHES:
            raise ValueError(f"{len(self.branches)} branches exceed the limit of {MAX_BRANCHES}")
        if abs(self.norm() - 1.0) > NORM_TOL:
            raise ValueError(f"Branch norm is {self.norm():.12f}, expected 1")

    @classmethod
    def from_vector(cls, psi, sigma: float = DEFAULT_SIGMA) -> 'BranchState':
        """Unshifted branches of a normalized two-photon ket given in the H/V basis"""
        psi = np.asarray(psi, dtype=complex).reshape(4)
        branches = tuple(
            Branch(complex(psi[2 * a + b]), a, b, (0.0, 0.0, 0.0, 0.0))
            for a in (0, 1) for b in (0, 1)
            if abs(psi[2 * a + b]) >= AMPLITUDE_TOL
        )
        return cls(branches, np.eye(2, dtype=complex), np.eye(2, dtype=complex), sigma)

    def norm(self) -> float:
        return float(sum(abs(branch.amplitude) ** 2 for branch in self.branches))

    def polarization_vector(self, branch: Branch) -> np.ndarray:
        return np.kron(self.frame_a[:, branch.pol_a], self.frame_b[:, branch.pol_b])

    @property
    def fully_coupled(self) -> bool:
        return self.applied == frozenset(COUPLING_KEYS)


Component = Tuple[float, BranchState]


def initial_state(visibility: float, sigma: float = DEFAULT_SIGMA) -> List[Component]:
    """Werner(V) as weighted Bell components: (1+3V)/4 on ψ⁻, (1−V)/4 on the other three"""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"Visibility {visibility} outside [0, 1]")

    weights = {
        'psi-': (1 + 3 * visibility) / 4,
        'psi+': (1 - visibility) / 4,
        'phi-': (1 - visibility) / 4,
        'phi+': (1 - visibility) / 4,
    }
    return [(weight, BranchState.from_vector(BELL_VECTORS[name], sigma))
            for name, weight in weights.items() if weight > 0]


def product_state(ket_a, ket_b, sigma: float = DEFAULT_SIGMA) -> List[Component]:
    """Single component |a⟩⊗|b⟩, e.g. the |H_A V_B⟩ calibration input"""
    return [(1.0, BranchState.from_vector(np.kron(ket_a, ket_b), sigma))]


def apply_weak_coupling(state: BranchState, party: str, stage: int,
                        theta: float, g: float) -> BranchState:
    """
    exp(−i·g·Π(θ)⊗P) on one pointer coordinate: stage 1 moves x, stage 2 moves y.

    Every branch is re-expanded in the Π(θ) eigenframe; the eigenvalue-1 part
    is shifted by g, the eigenvalue-0 part is left in place. Branches that land
    on the same (polarization, shift) key are merged.
    """
    key = (party, stage)
    if key not in COUPLING_COORDINATE:
        raise CouplingError(f"Unknown coupling {party}{stage}")
    if key in state.applied:
        raise CouplingError(f"Coupling {party}{stage} has already been applied")
    if g < 0:
        raise CouplingError(f"Coupling length must be non-negative, got {g}")

    coordinate = COUPLING_COORDINATE[key]
    new_frame = eigenframe(theta)
    old_frame = state.frame_a if party == 'A' else state.frame_b
    overlap = new_frame.conj().T @ old_frame

    merged: Dict[Tuple[int, int, Tuple[float, ...]], complex] = {}
    for branch in state.branches:
        old_pol = branch.pol_a if party == 'A' else branch.pol_b
        for new_pol in (0, 1):
            amplitude = branch.amplitude * overlap[new_pol, old_pol]
            if abs(amplitude) < AMPLITUDE_TOL:
                continue
            shift = list(branch.shift)
            if new_pol == 0:
                shift[coordinate] += g
            pols = (new_pol, branch.pol_b) if party == 'A' else (branch.pol_a, new_pol)
            slot = (*pols, tuple(shift))
            merged[slot] = merged.get(slot, 0j) + amplitude

    branches = tuple(Branch(complex(amplitude), pol_a, pol_b, tuple(float(d) for d in shift))
                     for (pol_a, pol_b, shift), amplitude in merged.items()
                     if abs(amplitude) >= AMPLITUDE_TOL)
    return BranchState(
        branches=branches,
        frame_a=new_frame if party == 'A' else state.frame_a,
        frame_b=new_frame if party == 'B' else state.frame_b,
        sigma=state.sigma,
        applied=state.applied | {key},
    )


def apply_settings(components: Sequence[Component], settings: MeasurementSettings,
                   order: Iterable[Tuple[str, int]] = COUPLING_KEYS) -> List[Component]:
    """Run all four couplings of `settings` on every component, in `order`"""
    order = tuple(order)
    if sorted(order) != sorted(COUPLING_KEYS):
        raise CouplingError(f"Coupling order must list each of {COUPLING_KEYS} once")

    coupled = []
    for weight, state in components:
        for party, stage in order:
            state = apply_weak_coupling(state, party, stage,
                                        settings.angle(party, stage), settings.coupling(party, stage))
        coupled.append((weight, state))
    return coupled


@dataclass(frozen=True)
class PixelGrid:
    """
    Square pixel geometry shared by X_A, Y_A, X_B and Y_B.

    Lengths are in pitch units by default. With the default origin the centre
    of pixel i sits at i·pitch and the beam centre at (n−1)/2·pitch.
    """

    n_pixels: int = DEFAULT_PIXELS
    pitch: float = 1.0
    origin: Optional[float] = None

    def __post_init__(self):
        if self.n_pixels < 2:
            raise ValueError(f"Grid needs at least 2 pixels per axis, got {self.n_pixels}")
        if self.pitch <= 0:
            raise ValueError(f"Pixel pitch must be positive, got {self.pitch}")
        if self.origin is None:
            object.__setattr__(self, 'origin', -0.5 * self.pitch)

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.pitch * np.arange(self.n_pixels + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.origin + self.pitch * (np.arange(self.n_pixels) + 0.5)

    @property
    def center(self) -> float:
        """Unperturbed beam centre: the grid midpoint"""
        return self.origin + 0.5 * self.n_pixels * self.pitch

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return (self.n_pixels,) * 4


@dataclass(eq=False)
class CoincidenceTensor:
    """Pixel coincidence counts N(X_A, Y_A, X_B, Y_B)"""

    counts: np.ndarray
    grid: PixelGrid
    total: Optional[int] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != self.grid.shape:
            raise ValueError(f"Counts shape {self.counts.shape} does not match grid {self.grid.shape}")
        if np.any(self.counts < 0):
            raise ValueError("Coincidence counts must be non-negative")
        count_sum = int(self.counts.sum())
        if self.total is None:
            self.total = count_sum
        elif self.total != count_sum:
            raise ValueError(f"Declared total {self.total} differs from the count sum {count_sum}")

    def marginal(self, coordinate: str) -> np.ndarray:
        axis = COORDINATES.index(coordinate)
        others = tuple(i for i in range(4) if i != axis)
        return self.counts.sum(axis=others)


def truncated_mass(grid: PixelGrid, sigma: float, mean: float) -> float:
    """Probability of a 1D Gaussian(mean, σ) density falling outside the grid"""
    scale = math.sqrt(2) * sigma
    edges = grid.edges
    return float(0.5 * erfc((edges[-1] - mean) / scale) + 0.5 * erfc((mean - edges[0]) / scale))


def check_coverage(grid: PixelGrid, sigma: float,
                   shift_values: Optional[Sequence[Iterable[float]]] = None):
    """Grid must reach 4σ past the beam centre and lose ≤ 1e−4 per axis for every shifted pointer"""
    reach = min(grid.center - grid.edges[0], grid.edges[-1] - grid.center)
    if reach < COVERAGE_SIGMAS * sigma - 1e-9:
        raise CoverageError(f"Grid reaches {reach:.3f} from the beam centre, "
                            f"needs {COVERAGE_SIGMAS:g}σ = {COVERAGE_SIGMAS * sigma:.3f}")

    shift_values = shift_values or [[0.0]] * 4
    for coordinate, values in zip(COORDINATES, shift_values):
        worst = max(truncated_mass(grid, sigma, grid.center + d) for d in values)
        if worst > TRUNCATION_PER_AXIS:
            raise CoverageError(f"Axis {coordinate} loses {worst:.2e} of its mass outside the grid "
                                f"(limit {TRUNCATION_PER_AXIS:.0e})")


def pair_bin_integrals(shifts: Sequence[float], grid: PixelGrid, sigma: float) -> np.ndarray:
    """
    I[u, v, bin] = ∫_bin f(ζ − c − d_u)·f(ζ − c − d_v) dζ for normalized Gaussian
    amplitudes f of width σ. The product is exp(−(d_u−d_v)²/8σ²) times a unit
    Gaussian density of width σ centred at c + (d_u+d_v)/2.
    """
    d = np.asarray(shifts, dtype=float)
    mid = grid.center + (d[:, None] + d[None, :]) / 2
    overlap = np.exp(-(d[:, None] - d[None, :]) ** 2 / (8 * sigma ** 2))
    cdf = erf((grid.edges[None, None, :] - mid[..., None]) / (math.sqrt(2) * sigma))
    return overlap[..., None] * 0.5 * np.diff(cdf, axis=-1)


def _require_coupled(components: Sequence[Component]) -> float:
    if not components:
        raise ValueError("No state components given")
    sigmas = {state.sigma for _, state in components}
    if len(sigmas) != 1:
        raise ValueError(f"Components disagree on the pointer width: {sorted(sigmas)}")
    for _, state in components:
        if not state.fully_coupled:
            missing = sorted(set(COUPLING_KEYS) - state.applied)
            raise CouplingError(f"Couplings {missing} have not been applied")
    return sigmas.pop()


def _matching_pairs(state: BranchState):
    """Branch pairs that survive the trace over polarization"""
    for k in state.branches:
        for l in state.branches:
            if k.pol_a == l.pol_a and k.pol_b == l.pol_b:
                yield k, l


def pixel_distribution(components: Sequence[Component], grid: PixelGrid) -> np.ndarray:
    """Exact probability of every (X_A, Y_A, X_B, Y_B) pixel cell"""
    sigma = _require_coupled(components)

    values = [sorted({branch.shift[c] for _, state in components for branch in state.branches})
              for c in range(4)]
    check_coverage(grid, sigma, values)
    index = [{value: i for i, value in enumerate(axis_values)} for axis_values in values]
    integrals = [pair_bin_integrals(axis_values, grid, sigma) for axis_values in values]

    coefficients = np.zeros(tuple(n for axis_values in values for n in (len(axis_values),) * 2),
                            dtype=complex)
    for weight, state in components:
        for k, l in _matching_pairs(state):
            slot = tuple(i for c in range(4) for i in (index[c][k.shift[c]], index[c][l.shift[c]]))
            coefficients[slot] += weight * k.amplitude * np.conj(l.amplitude)

    probs = np.einsum('abcdefgh,abi,cdj,efk,ghl->ijkl', coefficients, *integrals, optimize=True).real

    most_negative = probs.min()
    if most_negative < -NEGATIVE_PROB_TOL:
        raise ValueError(f"Pixel probability {most_negative:.3e} is negative beyond rounding")
    probs = np.clip(probs, 0.0, None)

    lost = 1.0 - probs.sum()
    if lost > 4 * TRUNCATION_PER_AXIS:
        raise CoverageError(f"Grid truncates {lost:.2e} of the coincidence probability")
    log.debug(f"Pixel tensor assembled from {len(components)} component(s), truncation {lost:.2e}")
    return probs


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator for one named acquisition; `index` separates δ points of a sweep"""
    if name not in STREAM_IDS:
        raise ValueError(f"Unknown acquisition stream {name!r}")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_IDS[name], index)))


def sample_coincidences(probs: np.ndarray, n_events: int,
                        seed: Union[int, np.random.SeedSequence, np.random.Generator],
                        grid: Optional[PixelGrid] = None) -> CoincidenceTensor:
    """Multinomial draw of `n_events` pairs from a (renormalized) pixel distribution"""
    probs = np.asarray(probs, dtype=float)
    grid = grid or PixelGrid(n_pixels=probs.shape[0])
    if probs.shape != grid.shape:
        raise ValueError(f"Probability shape {probs.shape} does not match grid {grid.shape}")
    if n_events < 0:
        raise ValueError(f"Number of events must be non-negative, got {n_events}")
    if n_events == 0:
        return CoincidenceTensor(np.zeros(grid.shape, dtype=np.int64), grid)

    p = np.clip(probs, 0.0, None).ravel()
    total = p.sum()
    if total <= 0:
        raise ValueError("Probability tensor is empty")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n_events, p / total)
    return CoincidenceTensor(counts.reshape(grid.shape), grid, n_events)


def reduced_polarization_state(components: Sequence[Component]) -> Tuple[PolarizationState, float]:
    """
    Polarization state left after tracing out all four pointers; each branch
    pair is weighted by the Gaussian overlaps ⟨f_d|f_d'⟩ = exp(−(d−d')²/8σ²).
    """
    rho = np.zeros((4, 4), dtype=complex)
    for weight, state in components:
        vectors = [state.polarization_vector(branch) for branch in state.branches]
        shifts = np.array([branch.shift for branch in state.branches], dtype=float)
        amplitudes = np.array([branch.amplitude for branch in state.branches])
        gaps = shifts[:, None, :] - shifts[None, :, :]
        overlaps = np.exp(-np.sum(gaps ** 2, axis=-1) / (8 * state.sigma ** 2))
        for k, vk in enumerate(vectors):
            for l, vl in enumerate(vectors):
                rho += weight * amplitudes[k] * np.conj(amplitudes[l]) * overlaps[k, l] * np.outer(vk, vl.conj())

    rho = (rho + rho.conj().T) / 2
    return PolarizationState(rho, None, 'pointer-traced'), purity(rho)


def pointer_moments(components: Sequence[Component]) -> Dict[str, float]:
    """
    Continuous (unpixelated) pointer moments measured from the beam centre:
    the four first moments and every product of two distinct coordinates,
    keyed like 'x_a' and 'x_a*y_b'.
    """
    sigma = _require_coupled(components)
    names = [(c,) for c in range(4)] + [(c, c2) for c in range(4) for c2 in range(c + 1, 4)]
    moments = dict.fromkeys(names, 0.0)
    for weight, state in components:
        for k, l in _matching_pairs(state):
            dk, dl = np.asarray(k.shift), np.asarray(l.shift)
            coefficient = weight * k.amplitude * np.conj(l.amplitude)
            coefficient *= math.exp(-float(np.sum((dk - dl) ** 2)) / (8 * sigma ** 2))
            mid = (dk + dl) / 2
            for name in names:
                moments[name] += float(np.real(coefficient * np.prod(mid[list(name)])))
    return {'*'.join(COORDINATES[c] for c in name): value for name, value in moments.items()}


def _translate(values: np.ndarray, axis: int, steps: int) -> np.ndarray:
    """Shift an array by whole cells along one axis, filling with zeros"""
    out = np.zeros_like(values)
    if abs(steps) >= values.shape[axis]:
        return out
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if steps >= 0:
        src[axis], dst[axis] = slice(0, values.shape[axis] - steps), slice(steps, None)
    else:
        src[axis], dst[axis] = slice(-steps, None), slice(0, values.shape[axis] + steps)
    out[tuple(dst)] = values[tuple(src)]
    return out


def _pixel_steps(shift: float, grid: PixelGrid) -> int:
    steps = shift / grid.pitch
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError(f"Tensor shifts must be whole pixels, got {shift} for pitch {grid.pitch}")
    return int(round(steps))


def _is_component_sequence(target) -> bool:
    return (isinstance(target, Sequence)
            and all(isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], BranchState)
                    for item in target))


def inject_hwp_shift(target, shifts: Mapping[str, float], grid: Optional[PixelGrid] = None):
    """
    Rigidly translate a distribution by per-coordinate offsets (keys from
    COORDINATES). Branch states and component sequences move every branch, so the
    shift enters the pixel integrals exactly; coverage is checked when they are
    pixelated. Probability arrays and CoincidenceTensors move by whole pixels.
    """
    unknown = set(shifts) - set(COORDINATES)
    if unknown:
        raise ValueError(f"Unknown shift coordinates: {sorted(unknown)}")
    offset = np.array([float(shifts.get(name, 0.0)) for name in COORDINATES])

    if isinstance(target, BranchState):
        branches = tuple(Branch(b.amplitude, b.pol_a, b.pol_b,
                                tuple(float(d) for d in np.asarray(b.shift) + offset))
                         for b in target.branches)
        return BranchState(branches, target.frame_a, target.frame_b, target.sigma, target.applied)

    if _is_component_sequence(target):
        return [(weight, inject_hwp_shift(state, shifts)) for weight, state in target]

    if isinstance(target, CoincidenceTensor):
        counts = target.counts
        for axis, shift in enumerate(offset):
            counts = _translate(counts, axis, _pixel_steps(shift, target.grid))
        lost = target.total - int(counts.sum())
        if target.total and lost / target.total > TRUNCATION_PER_AXIS:
            raise CoverageError(f"Shift pushes {lost} of {target.total} counts off the grid")
        return CoincidenceTensor(counts, target.grid, metadata=dict(target.metadata))

    probs = np.asarray(target, dtype=float)
    grid = grid or PixelGrid(n_pixels=probs.shape[0])
    moved = probs
    for axis, shift in enumerate(offset):
        moved = _translate(moved, axis, _pixel_steps(shift, grid))
    lost = probs.sum() - moved.sum()
    if lost > TRUNCATION_PER_AXIS:
        raise CoverageError(f"Shift pushes {lost:.2e} of the probability off the grid")
    return moved
