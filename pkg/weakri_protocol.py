#!/usr/bin/env python3
"""
weakri: six-acquisition protocol and δ sweep

For every δ point:

    [1/6] calib-HV     |H_A V_B⟩, crystals in, wave plates at zero
    [2/6] calib-VH     |V_A H_B⟩, crystals in, wave plates at zero
    [3/6] main         Werner source at the measurement angles
    [4/6] nocrystal-1  Werner source, crystals out, measurement angles
    [5/6] nocrystal-2  |H_A V_B⟩, crystals out, zero angles
    [6/6] nocrystal-3  |V_A H_B⟩, crystals out, zero angles

followed by calibration, wave-plate shift correction and the estimators.
Each point is written to its own directory; a failed point leaves nothing
behind.
"""

import json
import math
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger as root_logger

from weakri_estimation import CalibrationRecord, EstimateSet, calibrate, estimate, moments, shift_correction
from weakri_init import ExperimentConfig
from weakri_qcore import H_KET, V_KET, PolarizationState
from weakri_tensor_io import write_tensor
from weakri_theory import (
    MeasurementSettings,
    chsh_theory,
    decoherence_parameter,
    delta_theory,
    purity_expansion,
    ri_split,
    theory_curve,
)
from weakri_wmsim import (
    COORDINATES,
    CoincidenceTensor,
    apply_settings,
    initial_state,
    inject_hwp_shift,
    pixel_distribution,
    product_state,
    reduced_polarization_state,
    sample_coincidences,
    substream,
)

TABLE_COLUMNS = [
    'delta',
    'RI', 'sigma_RI', 'sigma_RI_stat', 'sigma_RI_cal',
    'RI_B', 'sigma_RI_B', 'sigma_RI_B_stat', 'sigma_RI_B_cal',
    'RI_Delta', 'sigma_RI_Delta', 'sigma_RI_Delta_stat', 'sigma_RI_Delta_cal',
    'B', 'sigma_B', 'sigma_B_stat', 'sigma_B_cal',
    'Delta', 'sigma_Delta', 'sigma_Delta_stat', 'sigma_Delta_cal',
    'chsh_violation',
    'B_theory', 'Delta_theory', 'RI_theory', 'RI_B_theory', 'RI_Delta_theory',
    'purity_in', 'purity_out',
]
THEORY_COLUMNS = ['delta', 'B_theory', 'Delta_theory', 'RI_theory', 'RI_B_theory', 'RI_Delta_theory']
FLOAT_FORMAT = '%.10g'
CURVE_POINTS = 181


@dataclass
class ProtocolResult:
    delta: float
    estimates: EstimateSet
    theory: Dict[str, float]
    calibration: CalibrationRecord
    directory: Optional[Path]

    @property
    def row(self) -> Dict[str, Any]:
        record = {**self.estimates.to_record(), **self.theory, 'delta': self.delta}
        return {column: record[column] for column in TABLE_COLUMNS}


def point_directory(output_dir: Path, index: int, delta: float) -> Path:
    return Path(output_dir) / f'delta_{index:02d}_{delta:+.6f}'


def theory_record(cfg: ExperimentConfig, settings: MeasurementSettings) -> Dict[str, float]:
    """Oracle values for one δ point, including the exact output-state purity"""
    state = PolarizationState.werner(cfg.visibility)
    chsh = chsh_theory(state, settings)
    delta_value = delta_theory(state, settings)
    ri_b, ri_delta = ri_split(chsh, delta_value)
    _, purity_out = reduced_polarization_state(
        apply_settings(initial_state(cfg.visibility, cfg.sigma), settings))
    omega = decoherence_parameter(max(settings.g.values()), settings.sigma)
    return {
        'B_theory': chsh,
        'Delta_theory': delta_value,
        'RI_theory': ri_b + ri_delta,
        'RI_B_theory': ri_b,
        'RI_Delta_theory': ri_delta,
        'purity_in': state.purity,
        'purity_out': purity_out,
        'omega': omega,
        'purity_expansion_singlet': purity_expansion(omega, settings.alpha1, settings.alpha2,
                                                     settings.beta1, settings.beta2),
    }


class ProtocolRunner:
    """Runs the acquisitions and estimators for the δ points of one config"""

    def __init__(self, cfg: ExperimentConfig, logger=None):
        self.cfg = cfg
        self.logger = logger or root_logger.bind(component='protocol')
        self.grid = cfg.grid

    def acquire(self, name: str, components, settings: MeasurementSettings, index: int,
                hwp_shift: bool = False) -> CoincidenceTensor:
        """Couple, optionally displace, pixelate and sample one acquisition"""
        coupled = apply_settings(components, settings)
        shifts = self.cfg.hwp_shifts if hwp_shift else {}
        if any(shifts.values()):
            coupled = inject_hwp_shift(coupled, shifts)
        probs = pixel_distribution(coupled, self.grid)
        tensor = sample_coincidences(probs, self.cfg.n_events, substream(self.cfg.seed, name, index), self.grid)
        tensor.metadata = {
            'acquisition': name,
            'seed': self.cfg.seed,
            'stream_index': index,
            'sigma': self.cfg.sigma,
            'angles': {f'{p}{j}': settings.angle(p, j) for p, j in settings.g},
            'couplings': {f'{p}{j}': value for (p, j), value in settings.g.items()},
            'hwp_shift': {c: float(shifts.get(c, 0.0)) for c in COORDINATES},
        }
        return tensor

    def run_protocol(self, delta: float, index: int = 0) -> ProtocolResult:
        cfg = self.cfg
        final_dir = point_directory(cfg.output_dir, index, delta)
        partial_dir = final_dir.with_name(final_dir.name + '.partial')

        self.logger.info("=" * 60)
        self.logger.info(f"δ = {delta:+.6f} rad (point {index})")
        self.logger.info("=" * 60)

        try:
            shutil.rmtree(partial_dir, ignore_errors=True)
            partial_dir.mkdir(parents=True)

            measurement = cfg.settings(delta)
            calibration = MeasurementSettings.calibration(cfg.g, cfg.sigma)
            source = initial_state(cfg.visibility, cfg.sigma)
            hv = product_state(H_KET, V_KET, cfg.sigma)
            vh = product_state(V_KET, H_KET, cfg.sigma)

            plan = [
                ('calib-HV', hv, calibration, False),
                ('calib-VH', vh, calibration, False),
                ('main', source, measurement, True),
                ('nocrystal-1', source, measurement.with_couplings(0.0), True),
                ('nocrystal-2', hv, calibration.with_couplings(0.0), False),
                ('nocrystal-3', vh, calibration.with_couplings(0.0), False),
            ]
            tensors = {}
            for step, (name, components, settings, shifted) in enumerate(plan, start=1):
                self.logger.info(f"[{step}/6] Acquiring {name}...")
                tensors[name] = self.acquire(name, components, settings, index, shifted)
                if cfg.write_tensors:
                    write_tensor(tensors[name], partial_dir / f'{name}.txt')
                self.logger.info(f"✓ {name}: {tensors[name].total} coincidences")

            self.logger.info("Calibrating pointer centres...")
            record = calibrate(tensors['calib-HV'], tensors['calib-VH'], cfg.n_subsets, cfg.seed)
            shifts, sigmas = shift_correction(tensors['nocrystal-1'], tensors['nocrystal-2'],
                                              tensors['nocrystal-3'], cfg.n_subsets, cfg.seed)
            record = record.with_hwp_shift(shifts, sigmas)
            self.logger.info("✓ Calibration and shift correction complete")

            estimates = estimate(moments(tensors['main']), record, delta)
            theory = theory_record(cfg, measurement)
            self.logger.info(f"✓ B = {estimates.B.value:.4f} ± {estimates.B.sigma_total:.4f} "
                             f"(theory {theory['B_theory']:.4f})")
            self.logger.info(f"✓ Δ = {estimates.Delta.value:.4f} ± {estimates.Delta.sigma_total:.4f} "
                             f"(theory {theory['Delta_theory']:.4f})")
            self.logger.info(f"✓ RI = {estimates.RI.value:.4f} ± {estimates.RI.sigma_total:.4f} "
                             f"(theory {theory['RI_theory']:.4f})")

            self._write_json(partial_dir / 'calibration.json', record.to_record())
            self._write_json(partial_dir / 'estimates.json', {
                'delta': delta,
                'estimates': estimates.to_record(),
                'theory': theory,
            })

            shutil.rmtree(final_dir, ignore_errors=True)
            partial_dir.rename(final_dir)
            return ProtocolResult(delta, estimates, theory, record, final_dir)

        except Exception:
            shutil.rmtree(partial_dir, ignore_errors=True)
            raise

    def sweep(self) -> List[ProtocolResult]:
        """Every configured δ point, then tables.csv and theory_curve.csv"""
        results = [self.run_protocol(delta, index) for index, delta in enumerate(self.cfg.deltas)]
        self.write_table(results)
        self.write_theory_curve()
        return results

    def write_table(self, results: List[ProtocolResult]) -> Path:
        path = Path(self.cfg.output_dir) / 'tables.csv'
        table = pd.DataFrame([result.row for result in results], columns=TABLE_COLUMNS)
        table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        self.logger.info(f"✓ Wrote {len(table)} row(s) to {path}")
        return path

    def write_theory_curve(self, n_points: int = CURVE_POINTS) -> Path:
        path = Path(self.cfg.output_dir) / 'theory_curve.csv'
        write_theory_curve(self.cfg.visibility, np.linspace(-math.pi / 2, math.pi / 2, n_points), path)
        self.logger.info(f"✓ Wrote theory curve to {path}")
        return path

    @staticmethod
    def _write_json(path: Path, payload: Dict[str, Any]):
        with open(path, 'w') as f:
            json.dump(payload, f, indent=2)
            f.write('\n')


def write_theory_curve(visibility: float, deltas, path: Path) -> Path:
    curve = theory_curve(visibility, deltas)[THEORY_COLUMNS]
    curve.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def run_protocol(cfg: ExperimentConfig, delta: float, index: int = 0, logger=None) -> ProtocolResult:
    runner = ProtocolRunner(cfg, logger)
    result = runner.run_protocol(delta, index)
    runner.write_table([result])
    return result


def sweep(cfg: ExperimentConfig, logger=None) -> List[ProtocolResult]:
    return ProtocolRunner(cfg, logger).sweep()
