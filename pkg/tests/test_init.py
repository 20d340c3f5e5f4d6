"""
tests/test_init.py
Configuration loading, overrides, validation stages and the default generator.
"""
import math
from pathlib import Path

import pytest
import yaml
from loguru import logger

from weakri_auto_config import DEFAULT_DELTAS, DefaultConfigGenerator
from weakri_init import (
    REQUIRED_KEYS,
    ConfigError,
    ExperimentInitializer,
    build_config,
    parse_angle,
    setup_logging,
)
from weakri_theory import COUPLING_KEYS

REPO_CONFIG = Path(__file__).resolve().parent.parent / 'weakri_config.yaml'


@pytest.fixture
def raw(tmp_path):
    return DefaultConfigGenerator(tmp_path / 'out').generate_config()


class TestParseAngle:
    """Angles as radians or 'k*pi/n' strings."""

    @pytest.mark.parametrize('text, expected', [
        ('0', 0.0),
        ('pi', math.pi),
        ('pi/2', math.pi / 2),
        ('-3pi/8', -3 * math.pi / 8),
        ('2*pi/3', 2 * math.pi / 3),
        ('0.25', 0.25),
        (0.1, 0.1),
        (-1, -1.0),
    ])
    def test_accepted_forms(self, text, expected) -> None:
        assert parse_angle(text) == pytest.approx(expected)

    def test_rejects_garbage(self) -> None:
        with pytest.raises(ConfigError, match='Cannot read angle'):
            parse_angle('three eighths')

    def test_default_deltas_parse(self) -> None:
        values = sorted(parse_angle(text) for text in DEFAULT_DELTAS)
        assert values == pytest.approx([k * math.pi / 8 for k in range(-4, 5)])


class TestBuildConfig:
    """Raw mapping to ExperimentConfig."""

    def test_defaults(self, raw) -> None:
        cfg = build_config(raw)
        assert cfg.sigma == pytest.approx(3.0)
        assert cfg.g == {key: pytest.approx(0.6) for key in COUPLING_KEYS}
        assert cfg.g_over_sigma == pytest.approx(0.2)
        assert len(cfg.deltas) == 9
        assert cfg.grid.n_pixels == 24

    def test_lengths_scale_with_pitch(self, raw) -> None:
        raw['pitch'] = 2.0
        cfg = build_config(raw)
        assert cfg.sigma == pytest.approx(6.0)
        assert cfg.g[('A', 1)] == pytest.approx(1.2)
        assert cfg.to_dict()['sigma_pitch'] == pytest.approx(3.0)

    def test_per_coupling_lengths(self, raw) -> None:
        raw['couplings_pitch'] = {'A1': 0.3, 'A2': 0.6, 'B1': 0.45, 'B2': 0.6}
        cfg = build_config(raw)
        assert cfg.g[('B', 1)] == pytest.approx(0.45)
        assert cfg.g_over_sigma == pytest.approx(0.2)

    def test_to_dict_round_trip(self, raw) -> None:
        cfg = build_config(raw)
        assert build_config(cfg.to_dict()) == cfg

    def test_missing_key(self, raw) -> None:
        del raw['seed']
        with pytest.raises(ConfigError, match='seed'):
            build_config(raw)

    @pytest.mark.parametrize('key, value, message', [
        ('visibility', 1.5, 'visibility'),
        ('n_events', 0, 'n_events'),
        ('seed', -1, 'seed'),
        ('n_pixels', 1, 'n_pixels'),
        ('n_subsets', 1, 'n_subsets'),
        ('pitch', 0.0, 'positive'),
        ('n_events', 'many', 'Malformed'),
        ('deltas_rad', [], 'at least one'),
    ])
    def test_out_of_range(self, raw, key, value, message) -> None:
        raw[key] = value
        with pytest.raises(ConfigError, match=message):
            build_config(raw)

    def test_unknown_coupling(self, raw) -> None:
        raw['couplings_pitch'] = {'A1': 0.6, 'A2': 0.6, 'B1': 0.6, 'C2': 0.6}
        with pytest.raises(ConfigError, match='Unknown coupling'):
            build_config(raw)

    def test_incomplete_couplings(self, raw) -> None:
        raw['couplings_pitch'] = {'A1': 0.6}
        with pytest.raises(ConfigError, match='all of'):
            build_config(raw)

    def test_unknown_shift_coordinate(self, raw) -> None:
        raw['hwp_shifts_pitch'] = {'z_a': 0.1}
        with pytest.raises(ConfigError, match='z_a'):
            build_config(raw)

    def test_no_coupling_given(self, raw) -> None:
        del raw['g_over_sigma']
        with pytest.raises(ConfigError, match='g_over_sigma'):
            build_config(raw)


class TestInitializer:
    """File loading, environment expansion, overrides and validation."""

    def test_overrides_win(self, raw) -> None:
        init = ExperimentInitializer(raw, {'n_events': 5000, 'seed': None})
        assert init.validate_all()
        assert init.config.n_events == 5000
        assert init.config.seed == 12345

    def test_g_override_replaces_per_coupling_lengths(self, raw) -> None:
        raw['couplings_pitch'] = {'A1': 0.3, 'A2': 0.3, 'B1': 0.3, 'B2': 0.3}
        init = ExperimentInitializer(raw, {'g_over_sigma': 0.1})
        assert init.validate_all()
        assert init.config.g[('A', 2)] == pytest.approx(0.3)
        assert init.config.g_over_sigma == pytest.approx(0.1)

    def test_environment_values(self, raw, monkeypatch) -> None:
        monkeypatch.setenv('WEAKRI_SEED', '77')
        raw['seed'] = '${WEAKRI_SEED}'
        init = ExperimentInitializer(raw)
        assert init.validate_all()
        assert init.config.seed == 77

    def test_unset_environment_value_fails_validation(self, raw, monkeypatch) -> None:
        monkeypatch.delenv('WEAKRI_UNSET_SEED', raising=False)
        raw['seed'] = '${WEAKRI_UNSET_SEED}'
        assert not ExperimentInitializer(raw).validate_all()

    def test_load_file(self, raw, tmp_path) -> None:
        path = tmp_path / 'experiment.yaml'
        path.write_text(yaml.safe_dump(raw))
        init = ExperimentInitializer(path)
        assert init.validate_all()
        assert init.config.output_dir.is_dir()

    def test_repository_config_is_valid(self, tmp_path) -> None:
        init = ExperimentInitializer(REPO_CONFIG, {'output_dir': str(tmp_path / 'repo')})
        assert init.validate_all()
        assert init.config.n_events == 1_000_000

    def test_unreadable_file(self, tmp_path) -> None:
        with pytest.raises(ConfigError, match='Cannot read'):
            ExperimentInitializer(tmp_path / 'missing.yaml')

    def test_file_without_mapping(self, tmp_path) -> None:
        path = tmp_path / 'list.yaml'
        path.write_text('- 1\n- 2\n')
        with pytest.raises(ConfigError, match='mapping'):
            ExperimentInitializer(path)

    def test_strong_coupling_fails(self, raw) -> None:
        raw['g_over_sigma'] = 0.6
        assert not ExperimentInitializer(raw).validate_all()

    def test_small_grid_fails(self, raw) -> None:
        raw['n_pixels'] = 16
        assert not ExperimentInitializer(raw).validate_all()

    def test_large_wave_plate_shift_fails(self, raw) -> None:
        raw['hwp_shifts_pitch'] = {'x_a': 2.0}
        assert not ExperimentInitializer(raw).validate_all()

    def test_output_estimate(self, raw) -> None:
        raw['n_events'] = 1000
        raw['deltas_rad'] = ['0', 'pi/4']
        init = ExperimentInitializer(raw)
        assert init.validate_all()
        assert init.estimated_output_bytes() == 1000 * 24 * 6 * 2
        init.config.write_tensors = False
        assert init.estimated_output_bytes() == 0


class TestDefaultConfig:
    """Built-in defaults and the config.yaml record."""

    def test_required_keys_present(self, tmp_path) -> None:
        config = DefaultConfigGenerator(tmp_path).generate_config()
        assert all(config[key] is not None for key in REQUIRED_KEYS)
        assert config['output_dir'] == str(tmp_path)

    def test_save_config(self, tmp_path) -> None:
        generator = DefaultConfigGenerator(tmp_path)
        config = generator.generate_config()
        path = generator.save_config(config, tmp_path / 'run')
        assert path.name == 'config.yaml'
        assert yaml.safe_load(path.read_text()) == config


class TestLogging:
    """Sink setup shared by every component."""

    def test_file_sink(self, tmp_path) -> None:
        log_file = tmp_path / 'weakri.log'
        try:
            setup_logging('INFO', log_file)
            logger.bind(component='sink').info('sink check')
            logger.info('unbound message')
        finally:
            setup_logging('WARNING')
        text = log_file.read_text()
        assert ' - sink - INFO - sink check' in text
        assert ' - weakri - INFO - unbound message' in text
