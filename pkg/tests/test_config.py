"""Tests for the run configuration."""

import json

import pytest

from config import CONFIG_ENV_VAR, ConfigError, RunConfig, load_config, reload_config
from core import RadarConfig


def test_defaults_are_valid():
    config = RunConfig()
    assert config.validate()
    assert config.outline_mode == 'peak'
    assert config.apex_prominence == 5.0 and config.trace_ratio == 0.5
    assert config.distance_mode == 'euclidean'
    assert config.assign_radius == 25
    assert len(config.catalog()) == 11
    assert config.radar_config().same_grid(RadarConfig())


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'threshold_factor': 2.0})


@pytest.mark.parametrize("data", [
    {'b': 1.0},
    {'open_size': 4},
    {'fill_threshold': 1.5},
    {'outline_mode': 'middle'},
    {'distance_mode': 'manhattan'},
    {'db_sizes': ['#12']},
    {'db_depths': [0.1, -0.02]},
    {'jobs': 0},
    {'trace_ratio': 1.0},
    {'apex_prominence': 0.0},
    {'b': 'wide'},
    {'b': True},
    {'open_size': 2.5},
    {'outline_mode': 3},
    {'db_depths': 0.1},
    {'time_zero_row': 600},
])
def test_invalid_values(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_from_dict_keeps_defaults():
    config = RunConfig.from_dict({'b': 2.5, 'db_depths': [0.05, 0.07]})
    assert config.b == 2.5
    assert config.db_depths == (0.05, 0.07)
    assert config.erosion_size == RunConfig().erosion_size


def test_with_overrides_ignores_none():
    config = RunConfig().with_overrides(jobs=3, b=None, noise_sigma=0.02)
    assert config.jobs == 3
    assert config.b == 1.5
    assert config.noise_sigma == 0.02
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(nonsense=1)
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(b=0.5)


def test_to_dict_round_trip():
    config = RunConfig(b=3.0, outline_mode='crest')
    assert RunConfig.from_dict(config.to_dict()) == config


def test_config_file_from_environment(tmp_path, monkeypatch):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'b': 2.0, 'jobs': 2}))
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    config = reload_config()
    assert config.b == 2.0
    assert config.jobs == 2
    # cached until reloaded
    assert load_config() is config


def test_explicit_path_wins_over_environment(tmp_path, monkeypatch):
    env_file = tmp_path / 'env.json'
    env_file.write_text(json.dumps({'b': 2.0}))
    cli_file = tmp_path / 'cli.json'
    cli_file.write_text(json.dumps({'b': 4.0}))
    monkeypatch.setenv(CONFIG_ENV_VAR, str(env_file))
    assert reload_config(str(cli_file)).b == 4.0


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigError):
        reload_config(str(tmp_path / 'missing.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text("{")
    with pytest.raises(ConfigError):
        reload_config(str(broken))
    listing = tmp_path / 'list.json'
    listing.write_text("[]")
    with pytest.raises(ConfigError):
        reload_config(str(listing))


def test_from_dict_coerces_numbers():
    config = RunConfig.from_dict({'b': '1.5', 'open_size': 5.0, 'db_sizes': ['#3', '#4']})
    assert config.b == 1.5 and isinstance(config.b, float)
    assert config.open_size == 5 and isinstance(config.open_size, int)
    assert config.db_sizes == ('#3', '#4')
