"""Tests for logging setup."""

import pytest

from logger import LOG_LEVELS, current_settings, get_logger, normalize_level, setup_logger


def test_normalize_level():
    assert normalize_level(" info ") == "INFO"
    with pytest.raises(ValueError):
        normalize_level("verbose")


def test_setup_logger_records_settings(tmp_path):
    log_file = tmp_path / 'logs' / 'run.log'
    setup_logger("debug", str(log_file))
    try:
        assert current_settings() == ("DEBUG", str(log_file))
        get_logger(__name__).debug("hello")
        assert log_file.parent.is_dir()
    finally:
        setup_logger("WARNING")
    assert current_settings() == ("WARNING", None)


def test_levels_are_ordered():
    assert LOG_LEVELS[0] == "DEBUG" and LOG_LEVELS[-1] == "CRITICAL"
