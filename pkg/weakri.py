#!/usr/bin/env python3
"""
weakri: command-line entry point

    weakri run    --delta 0 --events 1000000 --out results/
    weakri sweep  --config weakri_config.yaml
    weakri verify --out results/
    weakri theory --visibility 1 --out results/
"""

import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
import numpy as np
from loguru import logger

from weakri_auto_config import DEFAULT_OUTPUT_DIR, DefaultConfigGenerator
from weakri_init import ExperimentConfig, ExperimentInitializer, parse_angle, setup_logging
from weakri_protocol import CURVE_POINTS, ProtocolRunner, write_theory_curve
from weakri_verify import DEFAULT_STATES, verify

LOG_LEVELS = click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False)


def _experiment_options(func):
    options = [
        click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False),
                     help='YAML configuration file (defaults to the built-in protocol)'),
        click.option('--events', type=int, help='Coincidences per acquisition'),
        click.option('--seed', type=int, help='Master seed for every acquisition'),
        click.option('--visibility', type=float, help='Source visibility V in [0, 1]'),
        click.option('--g-over-sigma', type=float, help='Coupling strength for all four couplings'),
        click.option('--out', type=click.Path(file_okay=False), help='Output directory'),
        click.option('--log-level', default='INFO', type=LOG_LEVELS, help='Logging level'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def load_experiment(config_file: Optional[str], overrides: Dict[str, Any]) -> ExperimentConfig:
    """Config file (or defaults) plus CLI overrides, validated and recorded as config.yaml"""
    generator = DefaultConfigGenerator(overrides.get('output_dir') or DEFAULT_OUTPUT_DIR)
    source = config_file if config_file else generator.generate_config()
    initializer = ExperimentInitializer(source, overrides)
    if not initializer.validate_all():
        raise click.ClickException("Configuration validation failed")

    cfg = initializer.config
    if cfg.log_file:
        setup_logging(cfg.log_level, cfg.log_file)
    generator.save_config(cfg.to_dict(), cfg.output_dir)
    return cfg


def _overrides(events, seed, visibility, g_over_sigma, out, **extra) -> Dict[str, Any]:
    overrides = {
        'n_events': events,
        'seed': seed,
        'visibility': visibility,
        'g_over_sigma': g_over_sigma,
        'output_dir': out,
    }
    overrides.update(extra)
    return overrides


@click.group()
def cli():
    """Weak-measurement test of the RI bound: simulation, estimation and theory"""


@cli.command()
@_experiment_options
@click.option('--delta', help="Single δ in radians, or a form like '-3pi/8'")
def run(config_file, events, seed, visibility, g_over_sigma, out, log_level, delta):
    """Run the six-acquisition protocol at one δ"""
    setup_logging(log_level)
    try:
        deltas = [parse_angle(delta)] if delta is not None else None
        cfg = load_experiment(config_file, _overrides(events, seed, visibility, g_over_sigma, out,
                                                      deltas_rad=deltas))
        runner = ProtocolRunner(cfg)
        result = runner.run_protocol(cfg.deltas[0], 0)
        runner.write_table([result])
        logger.info(f"✓ Results written to {result.directory}")
    except click.ClickException:
        raise
    except Exception as e:
        logger.opt(exception=e).error(f"✗ Run failed: {e}")
        sys.exit(1)


@cli.command()
@_experiment_options
def sweep(config_file, events, seed, visibility, g_over_sigma, out, log_level):
    """Run every configured δ point and write tables.csv and theory_curve.csv"""
    setup_logging(log_level)
    try:
        cfg = load_experiment(config_file, _overrides(events, seed, visibility, g_over_sigma, out))
        results = ProtocolRunner(cfg).sweep()
        logger.info(f"✓ Sweep complete: {len(results)} δ point(s) in {cfg.output_dir}")
    except click.ClickException:
        raise
    except Exception as e:
        logger.opt(exception=e).error(f"✗ Sweep failed: {e}")
        sys.exit(1)


@cli.command('verify')
@click.option('--states', default=DEFAULT_STATES, show_default=True, help='Random states for the chain battery')
@click.option('--seed', default=0, show_default=True, help='Seed for the random states')
@click.option('--visibility', default=0.983, show_default=True, type=float)
@click.option('--g-over-sigma', default=0.2, show_default=True, type=float)
@click.option('--out', default=DEFAULT_OUTPUT_DIR, show_default=True, type=click.Path(file_okay=False))
@click.option('--log-level', default='INFO', type=LOG_LEVELS)
def verify_command(states, seed, visibility, g_over_sigma, out, log_level):
    """Covariance-chain and purity-expansion batteries; writes verify_report.txt"""
    setup_logging(log_level)
    try:
        report = verify(states, seed, visibility, g_over_sigma)
        Path(out).mkdir(parents=True, exist_ok=True)
        path = report.write(Path(out) / 'verify_report.txt')
        logger.info(f"{'✓' if report.passed else '✗'} Report written to {path}")
    except Exception as e:
        logger.opt(exception=e).error(f"✗ Verification failed to run: {e}")
        sys.exit(1)
    sys.exit(0 if report.passed else 1)


@cli.command()
@click.option('--visibility', default=0.983, show_default=True, type=float)
@click.option('--points', default=CURVE_POINTS, show_default=True, help='δ grid size over [−π/2, π/2]')
@click.option('--out', default=DEFAULT_OUTPUT_DIR, show_default=True, type=click.Path(file_okay=False))
@click.option('--log-level', default='INFO', type=LOG_LEVELS)
def theory(visibility, points, out, log_level):
    """Oracle curves only: B, Δ and RI against δ for a Werner source"""
    setup_logging(log_level)
    try:
        Path(out).mkdir(parents=True, exist_ok=True)
        path = write_theory_curve(visibility, np.linspace(-np.pi / 2, np.pi / 2, points),
                                  Path(out) / 'theory_curve.csv')
        logger.info(f"✓ Theory curve written to {path}")
    except Exception as e:
        logger.opt(exception=e).error(f"✗ Theory curve failed: {e}")
        sys.exit(1)


def main():
    cli()


if __name__ == '__main__':
    main()
