#!/usr/bin/env python3
"""
weakri: configuration loading & validation

Loads the experiment YAML, expands ${VAR} values from the environment,
applies command-line overrides and runs the validation stages before any
acquisition is simulated.
"""

import math
import os
import re
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml
from loguru import logger

from weakri_theory import COUPLING_KEYS, CouplingError, MeasurementSettings
from weakri_wmsim import COORDINATES, CoverageError, PixelGrid, check_coverage

log = logger.bind(component='init')

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} - {extra[component]} - {level} - {message}"

REQUIRED_KEYS = ('visibility', 'sigma_pitch', 'n_pixels', 'pitch', 'deltas_rad',
                 'n_events', 'seed', 'output_dir')

# Each acquisition file lists at most one row of ~24 bytes per nonzero cell
BYTES_PER_CELL = 24
ACQUISITIONS_PER_DELTA = 6

_ANGLE_PATTERN = re.compile(r'^\s*([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$')


class ConfigError(ValueError):
    """Raised for missing, malformed or out-of-range configuration values"""


def setup_logging(level: str = 'INFO', log_file: Optional[Union[str, Path]] = None):
    """Single sink setup for the whole package: stderr plus an optional file"""
    logger.remove()
    logger.configure(extra={'component': 'weakri'})
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)
    if log_file:
        logger.add(str(log_file), level='DEBUG', format=LOG_FORMAT)
    return logger


def parse_angle(value: Any) -> float:
    """Radians from a number or a 'k*pi/n' string such as '-3pi/8'"""
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(value)
    except (TypeError, ValueError):
        pass
    match = _ANGLE_PATTERN.match(str(value))
    if not match:
        raise ConfigError(f"Cannot read angle {value!r}; use radians or a form like '3pi/8'")
    sign, factor, divisor = match.groups()
    result = (float(factor) if factor else 1.0) * math.pi / (float(divisor) if divisor else 1.0)
    return -result if sign == '-' else result


def _coupling_key(name: str) -> Tuple[str, int]:
    """'A1' -> ('A', 1)"""
    key = (name[:1].upper(), int(name[1:])) if len(name) == 2 and name[1:].isdigit() else None
    if key not in COUPLING_KEYS:
        raise ConfigError(f"Unknown coupling {name!r}; expected one of A1, A2, B1, B2")
    return key


@dataclass
class ExperimentConfig:
    """
    Resolved experiment. Lengths are stored in grid length units
    (pitch-unit config values multiplied by `pitch`), angles in radians.
    """

    visibility: float
    sigma: float
    g: Dict[Tuple[str, int], float]
    n_pixels: int
    pitch: float
    deltas: List[float]
    n_events: int
    seed: int
    output_dir: Path
    hwp_shifts: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(COORDINATES, 0.0))
    n_subsets: int = 10
    write_tensors: bool = True
    log_level: str = 'INFO'
    log_file: Optional[str] = None

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.n_pixels, self.pitch)

    @property
    def g_over_sigma(self) -> float:
        return max(self.g.values()) / self.sigma

    def settings(self, delta: float) -> MeasurementSettings:
        return MeasurementSettings.standard(delta, sigma=self.sigma, g=self.g)

    def to_dict(self) -> Dict[str, Any]:
        """Pitch-unit mapping in the config-file layout"""
        return {
            'visibility': self.visibility,
            'sigma_pitch': self.sigma / self.pitch,
            'couplings_pitch': {f'{party}{stage}': value / self.pitch
                                for (party, stage), value in self.g.items()},
            'n_pixels': self.n_pixels,
            'pitch': self.pitch,
            'deltas_rad': list(self.deltas),
            'n_events': self.n_events,
            'seed': self.seed,
            'hwp_shifts_pitch': {c: value / self.pitch for c, value in self.hwp_shifts.items()},
            'n_subsets': self.n_subsets,
            'output_dir': str(self.output_dir),
            'write_tensors': self.write_tensors,
            'log_level': self.log_level,
            'log_file': self.log_file,
        }


def build_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Check a raw config mapping and convert it to an ExperimentConfig"""
    missing = [key for key in REQUIRED_KEYS if raw.get(key) is None]
    if missing:
        raise ConfigError(f"Missing required configuration keys: {missing}")

    try:
        visibility = float(raw['visibility'])
        pitch = float(raw['pitch'])
        sigma = float(raw['sigma_pitch']) * pitch
        n_pixels = int(raw['n_pixels'])
        n_events = int(raw['n_events'])
        seed = int(raw['seed'])
        n_subsets = int(raw.get('n_subsets', 10))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Malformed numeric value: {e}")

    if not 0.0 <= visibility <= 1.0:
        raise ConfigError(f"visibility must lie in [0, 1], got {visibility}")
    if pitch <= 0 or sigma <= 0:
        raise ConfigError("pitch and sigma_pitch must be positive")
    if n_pixels < 2:
        raise ConfigError(f"n_pixels must be at least 2, got {n_pixels}")
    if n_events <= 0:
        raise ConfigError(f"n_events must be positive, got {n_events}")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    if n_subsets < 2:
        raise ConfigError(f"n_subsets must be at least 2, got {n_subsets}")

    couplings = raw.get('couplings_pitch')
    if couplings:
        try:
            g = {_coupling_key(name): float(value) * pitch for name, value in couplings.items()}
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed couplings_pitch: {e}")
        if set(g) != set(COUPLING_KEYS):
            raise ConfigError("couplings_pitch must list all of A1, A2, B1, B2")
    elif raw.get('g_over_sigma') is not None:
        try:
            g = dict.fromkeys(COUPLING_KEYS, float(raw['g_over_sigma']) * sigma)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed g_over_sigma: {e}")
    else:
        raise ConfigError("Either g_over_sigma or couplings_pitch is required")

    deltas = raw['deltas_rad']
    if not isinstance(deltas, (list, tuple)):
        deltas = [deltas]
    if not deltas:
        raise ConfigError("deltas_rad must hold at least one angle")

    shifts = raw.get('hwp_shifts_pitch') or {}
    unknown = set(shifts) - set(COORDINATES)
    if unknown:
        raise ConfigError(f"Unknown hwp_shifts_pitch coordinates: {sorted(unknown)}")

    return ExperimentConfig(
        visibility=visibility,
        sigma=sigma,
        g=g,
        n_pixels=n_pixels,
        pitch=pitch,
        deltas=[parse_angle(value) for value in deltas],
        n_events=n_events,
        seed=seed,
        output_dir=Path(raw['output_dir']),
        hwp_shifts={c: float(shifts.get(c, 0.0)) * pitch for c in COORDINATES},
        n_subsets=n_subsets,
        write_tensors=bool(raw.get('write_tensors', True)),
        log_level=str(raw.get('log_level', 'INFO')),
        log_file=raw.get('log_file'),
    )


class ExperimentInitializer:
    def __init__(self, config: Union[str, Path, Mapping[str, Any]],
                 overrides: Optional[Mapping[str, Any]] = None, logger=None):
        self.logger = logger or log
        if isinstance(config, Mapping):
            self.raw = self.expand_env_vars(dict(config))
        else:
            self.raw = self.load_config(config)
        overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
        if 'g_over_sigma' in overrides:
            self.raw.pop('couplings_pitch', None)
        self.raw.update(overrides)
        self.config: Optional[ExperimentConfig] = None

    def load_config(self, config_file: Union[str, Path]) -> Dict[str, Any]:
        """Load and parse the YAML configuration file"""
        self.logger.info(f"Loading configuration from {config_file}")
        try:
            with open(config_file, 'r') as f:
                config = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            self.logger.error(f"Failed to load config: {e}")
            raise ConfigError(f"Cannot read {config_file}: {e}")
        if not isinstance(config, dict):
            raise ConfigError(f"{config_file} does not hold a key-value mapping")

        config = self.expand_env_vars(config)
        self.logger.info("✓ Configuration loaded successfully")
        return config

    def expand_env_vars(self, obj):
        """Recursively replace '${VAR}' strings with the environment value"""
        if isinstance(obj, dict):
            return {k: self.expand_env_vars(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [self.expand_env_vars(v) for v in obj]
        if isinstance(obj, str) and obj.startswith("${") and obj.endswith("}"):
            value = os.getenv(obj[2:-1])
            return obj if value is None else yaml.safe_load(value)
        return obj

    def validate_all(self) -> bool:
        """Run all validation stages; False on the first failure"""
        self.logger.info("=" * 60)
        self.logger.info("WEAKRI: CONFIGURATION & VALIDATION")
        self.logger.info("=" * 60)

        try:
            self.logger.info("[1/4] Validating configuration keys...")
            self.config = build_config(self.raw)
            self.logger.info(f"✓ Configuration valid: {len(self.config.deltas)} δ point(s), "
                             f"N = {self.config.n_events} per acquisition")

            self.logger.info("[2/4] Checking the weak-coupling regime...")
            self.validate_couplings()
            self.logger.info(f"✓ Couplings valid: max g/σ = {self.config.g_over_sigma:.3f}")

            self.logger.info("[3/4] Checking detector coverage...")
            self.validate_coverage()
            self.logger.info(f"✓ {self.config.n_pixels}x{self.config.n_pixels} grid covers ±4σ")

            self.logger.info("[4/4] Checking output directory and disk space...")
            self.check_disk_space()
            self.logger.info(f"✓ Output directory ready: {self.config.output_dir}")

            self.logger.info("=" * 60)
            self.logger.info("✓ ALL VALIDATIONS PASSED")
            self.logger.info("=" * 60)
            return True

        except (ConfigError, CouplingError, CoverageError, OSError) as e:
            self.logger.error(f"✗ Validation failed: {e}")
            return False

    def validate_couplings(self):
        self.config.settings(self.config.deltas[0])

    def validate_coverage(self):
        cfg = self.config
        shift_values = []
        for c, (party, stage) in zip(COORDINATES, COUPLING_KEYS):
            offset = cfg.hwp_shifts[c]
            shift_values.append([offset, offset + cfg.g[(party, stage)]])
        check_coverage(cfg.grid, cfg.sigma, shift_values)

    def estimated_output_bytes(self) -> int:
        cfg = self.config
        if not cfg.write_tensors:
            return 0
        cells = min(cfg.n_events, cfg.n_pixels ** 4)
        return cells * BYTES_PER_CELL * ACQUISITIONS_PER_DELTA * len(cfg.deltas)

    def check_disk_space(self):
        """Create the output directory and compare free space against the tensor estimate"""
        output_dir = self.config.output_dir
        output_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(output_dir, os.W_OK):
            raise ConfigError(f"Output directory {output_dir} is not writable")

        required = self.estimated_output_bytes()
        free = shutil.disk_usage(output_dir).free
        if free < required:
            self.logger.warning(f"Low disk space. Required: {required / 1024 ** 2:.1f} MB, "
                                f"available: {free / 1024 ** 2:.1f} MB")
        else:
            self.logger.info(f"Disk space available: {free / 1024 ** 3:.2f} GB "
                             f"(tensors need about {required / 1024 ** 2:.1f} MB)")
