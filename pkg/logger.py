"""
Logging configuration for the rebar estimation pipeline.

All log output goes to stderr (and optionally a rotating file) so that
result files written by the CLI never contain log text.
"""

import os
import sys
import logging
import logging.handlers
from pathlib import Path
from typing import Optional, Tuple

try:
    from loguru import logger as loguru_logger
    LOGURU_AVAILABLE = True
except ImportError:
    LOGURU_AVAILABLE = False

LOGGER_NAME = "gprbar"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

STDERR_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{extra[name]}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
    "<level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {extra[name]}:{function}:{line} | pid {process} - {message}"

_settings: Tuple[str, Optional[str]] = ("WARNING", None)


def normalize_level(log_level: str) -> str:
    """
    Upper-case a level name and check it.

    Raises:
        ValueError: If the level is not one of LOG_LEVELS
    """
    level = str(log_level).strip().upper()
    if level not in LOG_LEVELS:
        raise ValueError(f"Unknown log level {log_level!r}; expected one of {', '.join(LOG_LEVELS)}")
    return level


def setup_logger(log_level: str = "INFO", log_file: Optional[str] = None):
    """
    Set up logging configuration.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional rotating log file path

    Returns:
        Configured logger instance
    """
    global _settings

    log_level = normalize_level(log_level)
    _settings = (log_level, log_file)
    if LOGURU_AVAILABLE:
        return setup_loguru_logger(log_level, log_file)
    else:
        return setup_standard_logger(log_level, log_file)


def current_settings() -> Tuple[str, Optional[str]]:
    """(level, file) of the last setup_logger call, for re-use in worker processes."""
    return _settings


def setup_worker_logger(log_level: str) -> None:
    """Process-pool initializer: stderr only, so workers never share a rotating file."""
    setup_logger(log_level, None)


def setup_loguru_logger(log_level: str = "INFO", log_file: Optional[str] = None):
    """Set up loguru logger."""
    loguru_logger.remove()
    loguru_logger.configure(extra={"name": LOGGER_NAME})
    loguru_logger.add(sys.stderr, level=log_level, format=STDERR_FORMAT, colorize=True)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        loguru_logger.add(
            log_file,
            level=log_level,
            rotation="10 MB",
            retention="30 days",
            compression="zip",
            format=FILE_FORMAT,
        )

    return loguru_logger


def setup_standard_logger(log_level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """Set up standard Python logger."""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, log_level))
    logger.handlers.clear()

    formatter = logging.Formatter(
        '%(asctime)s | %(levelname)-8s | %(name)s:%(funcName)s:%(lineno)d | pid %(process)d - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(log_file, maxBytes=10*1024*1024, backupCount=5)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str = None):
    """
    Get a logger bound to a module name.

    Args:
        name: Usually the calling module's __name__

    Returns:
        Logger instance
    """
    if LOGURU_AVAILABLE:
        return loguru_logger.bind(name=name or LOGGER_NAME)
    if name:
        return logging.getLogger(f"{LOGGER_NAME}.{name}")
    return logging.getLogger(LOGGER_NAME)


try:
    root_logger = setup_logger(os.getenv("LOG_LEVEL", "WARNING"), os.getenv("LOG_PATH"))
except ValueError:
    root_logger = setup_logger("WARNING", os.getenv("LOG_PATH"))
