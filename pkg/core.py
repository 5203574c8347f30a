"""
Shared value types, unit conversions and grid normalization.

Every other module builds on the types defined here: the radar calibration
(RadarConfig), the intensity grid (BScan), the rebar catalog (RebarSize) and
ground-truth bar placements (RebarPlacement).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from logger import get_logger

logger = get_logger(__name__)

SPEED_OF_LIGHT = 2.99792458e8

# Simulator/grid defaults: 10 ns record over 512 samples, 5 mm trace spacing
DEFAULT_CENTER_FREQUENCY = 1.5e9
DEFAULT_PERMITTIVITY = 6.0
DEFAULT_TIME_WINDOW = 10e-9
DEFAULT_N_SAMPLES = 512
DEFAULT_DT = DEFAULT_TIME_WINDOW / DEFAULT_N_SAMPLES
DEFAULT_DX = 0.005
DEFAULT_N_TRACES = 600
DEFAULT_TIME_ZERO_ROW = 40


class GprBarError(Exception):
    """Base exception for all rebar estimation errors."""
    pass


class InvalidRadarConfig(GprBarError):
    """Exception raised when radar calibration values are inconsistent."""
    pass


class InvalidPermittivity(GprBarError):
    """Exception raised for a relative permittivity below 1 or non-finite."""
    pass


class InvalidPlacement(GprBarError):
    """Exception raised for a bar with non-positive depth or non-finite position."""
    pass


class EmptyInput(GprBarError):
    """Exception raised when a grid has no samples."""
    pass


class InvalidSample(GprBarError):
    """Exception raised when a grid holds non-finite or out-of-range values."""
    pass


def velocity_from_permittivity(eps_r: float) -> float:
    """
    Wave velocity in a non-magnetic medium of relative permittivity eps_r.

    Args:
        eps_r: Relative permittivity (>= 1)

    Returns:
        Velocity in m/s

    Raises:
        InvalidPermittivity: If eps_r < 1 or not finite
    """
    if eps_r is None or not math.isfinite(eps_r) or eps_r < 1.0:
        raise InvalidPermittivity(f"Relative permittivity must be finite and >= 1, got {eps_r}")
    return SPEED_OF_LIGHT / math.sqrt(eps_r)


@dataclass(frozen=True)
class RadarConfig:
    """Acquisition and material parameters of one B-scan."""

    center_frequency: float = DEFAULT_CENTER_FREQUENCY
    relative_permittivity: float = DEFAULT_PERMITTIVITY
    dt: float = DEFAULT_DT
    dx: float = DEFAULT_DX
    n_samples: int = DEFAULT_N_SAMPLES
    n_traces: int = DEFAULT_N_TRACES
    time_zero_row: int = DEFAULT_TIME_ZERO_ROW

    def __post_init__(self):
        if not (math.isfinite(self.center_frequency) and self.center_frequency > 0):
            raise InvalidRadarConfig(f"center_frequency must be positive, got {self.center_frequency}")
        # velocity check raises InvalidPermittivity
        velocity_from_permittivity(self.relative_permittivity)
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidRadarConfig(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.dx) and self.dx > 0):
            raise InvalidRadarConfig(f"dx must be positive, got {self.dx}")
        if self.n_samples < 2 or self.n_traces < 2:
            raise InvalidRadarConfig(
                f"Grid must be at least 2x2, got {self.n_samples}x{self.n_traces}"
            )
        if not 0 <= self.time_zero_row < self.n_samples:
            raise InvalidRadarConfig(
                f"time_zero_row {self.time_zero_row} outside [0, {self.n_samples})"
            )

    @property
    def wave_velocity(self) -> float:
        """Velocity derived from the relative permittivity."""
        return velocity_from_permittivity(self.relative_permittivity)

    @property
    def aperture(self) -> float:
        """Lateral extent of the scan in meters."""
        return (self.n_traces - 1) * self.dx

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_samples, self.n_traces)

    @property
    def main_lobe_rows(self) -> int:
        """Rows from a Ricker peak to its first zero crossing, rounded up."""
        zero_crossing = 1.0 / (math.sqrt(2.0) * math.pi * self.center_frequency)
        return int(math.ceil(zero_crossing / self.dt))

    def to_dict(self) -> Dict[str, float]:
        """Metadata in the units of the scan file format."""
        return {
            'n_samples': self.n_samples,
            'n_traces': self.n_traces,
            'dt_ns': self.dt * 1e9,
            'dx_m': self.dx,
            'time_zero_row': self.time_zero_row,
            'eps_r': self.relative_permittivity,
            'center_freq_ghz': self.center_frequency / 1e9,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> 'RadarConfig':
        """Build a config from scan-file metadata (see to_dict)."""
        return cls(
            center_frequency=float(data['center_freq_ghz']) * 1e9,
            relative_permittivity=float(data['eps_r']),
            dt=float(data['dt_ns']) * 1e-9,
            dx=float(data['dx_m']),
            n_samples=int(data['n_samples']),
            n_traces=int(data['n_traces']),
            time_zero_row=int(data['time_zero_row']),
        )

    def same_grid(self, other: 'RadarConfig', rel_tol: float = 1e-9) -> bool:
        """True when both configs share velocity and grid calibration."""
        return (
            math.isclose(self.wave_velocity, other.wave_velocity, rel_tol=rel_tol)
            and math.isclose(self.dt, other.dt, rel_tol=rel_tol)
            and math.isclose(self.dx, other.dx, rel_tol=rel_tol)
            and self.time_zero_row == other.time_zero_row
        )


def normalize(raw_grid) -> np.ndarray:
    """
    Affine min-max map of a grid onto [0, 1].

    A constant grid maps to all zeros.

    Args:
        raw_grid: Array-like of real values

    Returns:
        Float array of the same shape in [0, 1]

    Raises:
        EmptyInput: If the grid has no values
        InvalidSample: If any value is NaN or infinite
    """
    grid = np.asarray(raw_grid, dtype=float)
    if grid.size == 0:
        raise EmptyInput("Cannot normalize an empty grid")
    if not np.all(np.isfinite(grid)):
        raise InvalidSample("Grid contains non-finite values")

    low = grid.min()
    high = grid.max()
    if high == low:
        return np.zeros_like(grid)
    out = (grid - low) / (high - low)
    # guard against 1.0000000000000002 from rounding
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class BScan:
    """A 2-D intensity grid (time samples x traces) with its calibration."""

    intensities: np.ndarray
    config: RadarConfig = field(default_factory=RadarConfig)

    def __post_init__(self):
        grid = np.array(self.intensities, dtype=float, copy=True)
        if grid.size == 0:
            raise EmptyInput("B-scan grid is empty")
        if grid.shape != self.config.shape:
            raise InvalidSample(
                f"Grid shape {grid.shape} does not match config {self.config.shape}"
            )
        if not np.all(np.isfinite(grid)):
            raise InvalidSample("B-scan contains non-finite intensities")
        if grid.min() < 0.0 or grid.max() > 1.0:
            raise InvalidSample(
                f"B-scan intensities must lie in [0, 1], got [{grid.min()}, {grid.max()}]"
            )
        grid.flags.writeable = False
        object.__setattr__(self, 'intensities', grid)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.intensities.shape

    def replace(self, intensities: np.ndarray) -> 'BScan':
        """New scan with the same calibration and different intensities."""
        return BScan(intensities, self.config)

    @classmethod
    def from_raw(cls, raw_grid, config: Optional[RadarConfig] = None) -> 'BScan':
        """Normalize an arbitrary real grid into a scan."""
        grid = normalize(raw_grid)
        if config is None:
            config = RadarConfig(n_samples=grid.shape[0], n_traces=grid.shape[1],
                                 time_zero_row=min(DEFAULT_TIME_ZERO_ROW, grid.shape[0] - 1))
        return cls(grid, config)


@dataclass(frozen=True)
class RebarSize:
    """A standard bar designation and its nominal diameter in meters."""

    designation: str
    diameter: float

    @property
    def radius(self) -> float:
        return self.diameter / 2.0

    @property
    def ordinal(self) -> int:
        """Position of this size in the catalog (0 = smallest)."""
        return CATALOG_INDEX[self.designation]

    def __str__(self) -> str:
        return self.designation


# Nominal diameters (inch-pound bar numbers)
REBAR_CATALOG: Tuple[RebarSize, ...] = (
    RebarSize('#3', 0.009525),
    RebarSize('#4', 0.0127),
    RebarSize('#5', 0.015875),
    RebarSize('#6', 0.01905),
    RebarSize('#7', 0.022225),
    RebarSize('#8', 0.0254),
    RebarSize('#9', 0.028651),
    RebarSize('#10', 0.032258),
    RebarSize('#11', 0.035814),
    RebarSize('#14', 0.043002),
    RebarSize('#18', 0.057328),
)

CATALOG_INDEX: Dict[str, int] = {size.designation: i for i, size in enumerate(REBAR_CATALOG)}


def rebar_size(designation: str) -> RebarSize:
    """
    Look up a catalog size by designation ("#7" or "7").

    Raises:
        KeyError: If the designation is not in the catalog
    """
    key = designation.strip()
    if not key.startswith('#'):
        key = f"#{key}"
    if key not in CATALOG_INDEX:
        raise KeyError(f"Unknown rebar designation: {designation}")
    return REBAR_CATALOG[CATALOG_INDEX[key]]


def catalog_slice(first: str, last: str) -> Tuple[RebarSize, ...]:
    """Catalog sizes from first to last designation, inclusive."""
    start = rebar_size(first).ordinal
    stop = rebar_size(last).ordinal
    return REBAR_CATALOG[start:stop + 1]


@dataclass(frozen=True)
class RebarPlacement:
    """Ground truth for one bar: lateral axis position, cover depth and size."""

    x0: float
    depth: float
    size: RebarSize

    def __post_init__(self):
        if not (math.isfinite(self.depth) and self.depth > 0):
            raise InvalidPlacement(f"Cover depth must be positive, got {self.depth}")
        if not math.isfinite(self.x0):
            raise InvalidPlacement(f"Lateral position must be finite, got {self.x0}")

    def apex_col(self, config: RadarConfig) -> int:
        return int(round(self.x0 / config.dx))

    def inside(self, config: RadarConfig) -> bool:
        return 0.0 <= self.x0 <= config.aperture + 1e-12

    def to_dict(self) -> Dict[str, object]:
        return {'x0': self.x0, 'depth': self.depth, 'size': self.size.designation}

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> 'RebarPlacement':
        return cls(float(data['x0']), float(data['depth']), rebar_size(str(data['size'])))

