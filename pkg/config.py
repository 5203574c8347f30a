"""Run configuration for the rebar estimation pipeline."""

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from core import (
    DEFAULT_CENTER_FREQUENCY,
    DEFAULT_DX,
    DEFAULT_N_SAMPLES,
    DEFAULT_N_TRACES,
    DEFAULT_PERMITTIVITY,
    DEFAULT_TIME_WINDOW,
    DEFAULT_TIME_ZERO_ROW,
    REBAR_CATALOG,
    GprBarError,
    RadarConfig,
    RebarSize,
    rebar_size,
)
from logger import LOG_LEVELS, get_logger

logger = get_logger(__name__)

CONFIG_ENV_VAR = "GPRBAR_CONFIG"

_config_instance: Optional['RunConfig'] = None


class ConfigError(GprBarError):
    """Exception raised for unknown keys or invalid values in a run configuration."""
    pass


def _coerce_number(name: str, value: Any, kind: type) -> Any:
    """Convert a JSON scalar (or numeric string) to int or float."""
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    try:
        number = float(value)
    except ValueError as e:
        raise ConfigError(f"{name} must be a number, got {value!r}") from e
    if kind is int:
        if not number.is_integer():
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(number)
    return number


def _coerce_field(name: str, value: Any, kind: Any) -> Any:
    """Check and convert one configuration value against its field type."""
    if kind in (int, float):
        return _coerce_number(name, value, kind)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    if kind == Optional[str]:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{name} must be a string or null, got {value!r}")
        return value
    # Tuple[float, ...] and Tuple[str, ...]
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{name} must be a list, got {value!r}")
    item_kind = kind.__args__[0]
    if item_kind is str:
        return tuple(_coerce_field(name, item, str) for item in value)
    return tuple(_coerce_number(name, item, float) for item in value)


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the pipeline with its default value."""

    # Direct-wave removal
    window_fraction: float = 0.25
    open_size: int = 3
    # Binarization and gap filling
    b: float = 1.5
    fill_kernel: int = 5
    fill_threshold: float = 0.1
    fill_max_iters: int = 10
    min_segment_pixels: int = 20
    # Intersections
    ransac_window: int = 31
    ransac_stride: int = 8
    ransac_inlier_distance: float = 1.5
    ransac_max_trials: int = 100
    ransac_min_inliers: int = 10
    ransac_max_lines: int = 4
    min_slope: float = 0.2
    slope_tolerance: float = 0.5
    merge_radius: float = 10.0
    arm_length: float = 8.0
    # Separation and outlines
    erosion_size: int = 30
    join_radius: float = 40.0
    apex_prominence: float = 5.0
    min_outline_points: int = 15
    outline_mode: str = 'peak'
    trace_ratio: float = 0.5
    # Matching
    distance_mode: str = 'euclidean'
    db_depths: Tuple[float, ...] = (0.06, 0.08, 0.10, 0.12, 0.14)
    db_sizes: Tuple[str, ...] = tuple(size.designation for size in REBAR_CATALOG)
    # Simulator and grid
    center_frequency: float = DEFAULT_CENTER_FREQUENCY
    relative_permittivity: float = DEFAULT_PERMITTIVITY
    n_samples: int = DEFAULT_N_SAMPLES
    n_traces: int = DEFAULT_N_TRACES
    time_window: float = DEFAULT_TIME_WINDOW
    dx: float = DEFAULT_DX
    time_zero_row: int = DEFAULT_TIME_ZERO_ROW
    noise_sigma: float = 0.0
    seed: int = 0
    # Evaluation
    jobs: int = 1
    assign_radius: int = 25
    # Logging
    log_level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "WARNING"))
    log_path: Optional[str] = field(default_factory=lambda: os.getenv("LOG_PATH"))

    def __post_init__(self):
        object.__setattr__(self, 'db_depths', tuple(float(d) for d in self.db_depths))
        object.__setattr__(self, 'db_sizes', tuple(str(s) for s in self.db_sizes))

    def validate(self) -> bool:
        """
        Range-check every field.

        Raises:
            ConfigError: On the first invalid value
        """
        if not 0.0 < self.window_fraction <= 1.0:
            raise ConfigError("window_fraction must lie in (0, 1]")
        for name in ('open_size', 'fill_kernel'):
            value = getattr(self, name)
            if value < 3 or value % 2 == 0:
                raise ConfigError(f"{name} must be odd and >= 3")
        if not self.b > 1.0:
            raise ConfigError("b must exceed 1")
        if not 0.0 < self.fill_threshold < 1.0:
            raise ConfigError("fill_threshold must lie in (0, 1)")
        for name in ('fill_max_iters', 'ransac_window', 'ransac_stride', 'ransac_max_trials',
                     'ransac_min_inliers', 'ransac_max_lines', 'erosion_size', 'min_outline_points',
                     'jobs', 'n_samples', 'n_traces'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.min_segment_pixels < 0 or self.assign_radius < 0:
            raise ConfigError("min_segment_pixels and assign_radius must be non-negative")
        for name in ('ransac_inlier_distance', 'min_slope', 'slope_tolerance', 'merge_radius',
                     'arm_length', 'join_radius', 'apex_prominence', 'center_frequency',
                     'time_window', 'dx'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive")
        if self.outline_mode not in ('peak', 'edge', 'crest'):
            raise ConfigError("outline_mode must be 'peak', 'edge' or 'crest'")
        if not 0.0 <= self.trace_ratio < 1.0:
            raise ConfigError("trace_ratio must lie in [0, 1)")
        if self.distance_mode not in ('euclidean', 'vertical'):
            raise ConfigError("distance_mode must be 'euclidean' or 'vertical'")
        if not self.db_depths or any(d <= 0 for d in self.db_depths):
            raise ConfigError("db_depths must be a non-empty list of positive depths")
        if not self.db_sizes:
            raise ConfigError("db_sizes must not be empty")
        try:
            self.catalog()
        except KeyError as e:
            raise ConfigError(str(e)) from e
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if not 0 <= self.time_zero_row < self.n_samples:
            raise ConfigError("time_zero_row must lie inside the record")
        if self.relative_permittivity < 1.0:
            raise ConfigError("relative_permittivity must be at least 1")
        if str(self.log_level).upper() not in LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {', '.join(LOG_LEVELS)}")
        return True

    def radar_config(self) -> RadarConfig:
        """Grid calibration described by this configuration."""
        return RadarConfig(
            center_frequency=self.center_frequency,
            relative_permittivity=self.relative_permittivity,
            dt=self.time_window / self.n_samples,
            dx=self.dx,
            n_samples=self.n_samples,
            n_traces=self.n_traces,
            time_zero_row=self.time_zero_row,
        )

    def catalog(self) -> List[RebarSize]:
        return [rebar_size(designation) for designation in self.db_sizes]

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to a JSON-friendly dictionary."""
        data = asdict(self)
        data['db_depths'] = list(self.db_depths)
        data['db_sizes'] = list(self.db_sizes)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        """
        Build a configuration from a mapping; missing keys keep defaults.

        Values are converted to the field types; numeric strings are accepted.

        Raises:
            ConfigError: On unknown keys, values of the wrong type or invalid values
        """
        kinds = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(data) - set(kinds))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        config = cls(**{name: _coerce_field(name, value, kinds[name]) for name, value in data.items()})
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str) -> 'RunConfig':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read configuration file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Configuration file {path} must hold a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> 'RunConfig':
        """Copy with the given fields replaced; None values are ignored."""
        values = {k: v for k, v in overrides.items() if v is not None}
        known = {f.name for f in fields(self)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        config = replace(self, **values)
        config.validate()
        return config


def load_config(path: Optional[str] = None) -> RunConfig:
    """Load the run configuration once per process.

    Defaults are overlaid with the JSON file given as path, or else the file
    named by the GPRBAR_CONFIG environment variable.

    Returns:
        RunConfig: Validated configuration
    """
    global _config_instance

    if _config_instance is None:
        source = path or os.getenv(CONFIG_ENV_VAR)
        if source:
            if not Path(source).is_file():
                raise ConfigError(f"Configuration file not found: {source}")
            _config_instance = RunConfig.from_file(source)
            logger.info(f"Configuration loaded from {source}")
        else:
            _config_instance = RunConfig()
            _config_instance.validate()
            logger.debug("Using default configuration")

    return _config_instance


def reload_config(path: Optional[str] = None) -> RunConfig:
    """Force reload of configuration, useful for testing or config changes."""
    global _config_instance
    _config_instance = None
    return load_config(path)
