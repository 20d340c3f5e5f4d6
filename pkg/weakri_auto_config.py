#!/usr/bin/env python3
"""
weakri: default configuration generator
"""

from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from loguru import logger as root_logger

DEFAULT_DELTAS = ['0', 'pi/8', '-pi/8', 'pi/4', '-pi/4', '3pi/8', '-3pi/8', 'pi/2', '-pi/2']
DEFAULT_OUTPUT_DIR = './weakri_output'


class DefaultConfigGenerator:
    """Builds the protocol defaults used when no config file is given"""

    def __init__(self, output_dir: Union[str, Path] = DEFAULT_OUTPUT_DIR, logger=None):
        self.output_dir = Path(output_dir)
        self.logger = logger or root_logger.bind(component='auto_config')

    def generate_config(self) -> Dict[str, Any]:
        config = {
            # source
            'visibility': 0.983,
            # pointers, in pixel-pitch units
            'sigma_pitch': 3.0,
            'g_over_sigma': 0.2,
            # detector
            'n_pixels': 24,
            'pitch': 1.0,
            # protocol; angles in radians or 'k*pi/n'
            'deltas_rad': list(DEFAULT_DELTAS),
            'n_events': 1_000_000,
            'seed': 12345,
            'hwp_shifts_pitch': {'x_a': 0.0, 'y_a': 0.0, 'x_b': 0.0, 'y_b': 0.0},
            'n_subsets': 10,
            # output
            'output_dir': str(self.output_dir),
            'write_tensors': True,
            'log_level': 'INFO',
            'log_file': None,
        }
        self.logger.debug(f"Default configuration: {config}")
        return config

    def save_config(self, config: Dict[str, Any], directory: Optional[Union[str, Path]] = None) -> Path:
        """Write `config` as config.yaml so the run records its inputs"""
        directory = Path(directory or config.get('output_dir', self.output_dir))
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / 'config.yaml'
        with open(path, 'w') as f:
            yaml.safe_dump(config, f, sort_keys=False, default_flow_style=None)
        self.logger.debug(f"Configuration saved to: {path}")
        return path
