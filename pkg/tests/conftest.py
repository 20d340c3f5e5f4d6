"""
tests/conftest.py
Shared fixtures for the weakri test suite.

Run with:
    pytest -m "not slow"     # unit tests only
    pytest                   # everything, including full-size protocol runs
"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np
import pytest

from weakri_auto_config import DefaultConfigGenerator
from weakri_init import build_config
from weakri_qcore import PolarizationState
from weakri_theory import MeasurementSettings
from weakri_wmsim import CoincidenceTensor, PixelGrid

NOISE_FREE_EVENTS = 100_000_000


@pytest.fixture
def singlet():
    return PolarizationState.singlet()


@pytest.fixture
def standard_settings():
    """Default bases at δ = 0, g/σ = 0.2, σ = 3 pitch"""
    return MeasurementSettings.standard(0.0)


@pytest.fixture
def grid():
    return PixelGrid(24, 1.0)


@pytest.fixture
def make_config(tmp_path):
    """ExperimentConfig from the built-in defaults plus keyword overrides"""
    def factory(**overrides):
        raw = DefaultConfigGenerator(tmp_path / 'out').generate_config()
        raw.update(overrides)
        return build_config(raw)
    return factory


@pytest.fixture
def noise_free_sampler():
    """
    Drop-in for sample_coincidences returning expected counts instead of a
    draw. Counts are scaled to NOISE_FREE_EVENTS whatever n_events says, so
    rounding to integers leaves no visible bias.
    """
    def sampler(probs, n_events, seed=None, grid=None):
        probs = np.asarray(probs, dtype=float)
        grid = grid or PixelGrid(n_pixels=probs.shape[0])
        return CoincidenceTensor(np.rint(probs / probs.sum() * NOISE_FREE_EVENTS).astype(np.int64), grid)
    return sampler
