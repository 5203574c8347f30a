"""
Analytic travel-time model and the theoretical hyperbola database.

A bar of radius r whose top surface lies at cover depth d below the scan line
returns the first reflection at two-way time

    t(x) = (2 / v) * (sqrt((x - x0)**2 + (d + r)**2) - r)

so the apex time 2d/v depends on depth only, while larger bars give flatter
wings. The database holds one apex-centered curve per (depth, size) pair.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core import GprBarError, RadarConfig, RebarSize
from logger import get_logger

logger = get_logger(__name__)


class TheoryError(GprBarError):
    """Base exception for travel-time and database operations."""
    pass


class InvalidGeometry(TheoryError):
    """Exception raised for non-positive depth or velocity, or negative radius."""
    pass


class DuplicateEntry(TheoryError):
    """Exception raised when a (depth, size) pair is requested twice."""
    pass


class UnknownEntry(TheoryError):
    """Exception raised when a database lookup finds no matching entry."""
    pass


def travel_time(x, x0: float, d: float, r: float, v: float):
    """
    Two-way travel time of the first reflection from a circular bar.

    Args:
        x: Antenna position(s) in meters (scalar or array)
        x0: Lateral position of the bar axis in meters
        d: Cover depth to the bar top surface in meters
        r: Bar radius in meters
        v: Wave velocity in m/s

    Returns:
        Time(s) in seconds, same shape as x

    Raises:
        InvalidGeometry: If v <= 0, d <= 0 or r < 0
    """
    if not (v > 0 and math.isfinite(v)):
        raise InvalidGeometry(f"Velocity must be positive, got {v}")
    if not (d > 0 and math.isfinite(d)):
        raise InvalidGeometry(f"Depth must be positive, got {d}")
    if not (r >= 0 and math.isfinite(r)):
        raise InvalidGeometry(f"Radius must be non-negative, got {r}")

    offset = np.asarray(x, dtype=float) - x0
    center = d + r
    # written as d + (hypot - center) so the apex is exactly 2d/v for any r
    t = (2.0 / v) * (d + (np.hypot(offset, center) - center))
    if np.ndim(t) == 0:
        return float(t)
    return t


@dataclass(frozen=True)
class DatabaseEntry:
    """
    One theoretical hyperbola.

    curve[k] is the real-valued arrival row at column offset k - half_width
    from the apex.
    """

    depth: float
    size: RebarSize
    curve: np.ndarray

    def __post_init__(self):
        curve = np.array(self.curve, dtype=float, copy=True)
        if curve.ndim != 1 or curve.size % 2 == 0:
            raise InvalidGeometry("Curve must be 1-D with odd length (apex-centered)")
        curve.flags.writeable = False
        object.__setattr__(self, 'curve', curve)

    @property
    def half_width(self) -> int:
        return (self.curve.size - 1) // 2

    @property
    def apex_row(self) -> float:
        return float(self.curve[self.half_width])

    @property
    def key(self) -> Tuple[float, str]:
        return entry_key(self.depth, self.size.designation)

    def placed(self, apex_col: float) -> Tuple[np.ndarray, np.ndarray]:
        """Columns and rows of the curve with its apex moved to apex_col."""
        offsets = np.arange(-self.half_width, self.half_width + 1, dtype=float)
        return apex_col + offsets, self.curve


def entry_key(depth: float, designation: str) -> Tuple[float, str]:
    # depths are compared at nanometer resolution
    return (round(float(depth), 9), designation)


@dataclass(frozen=True)
class HyperbolaDatabase:
    """Immutable collection of theoretical curves with their calibration."""

    entries: Tuple[DatabaseEntry, ...]
    velocity: float
    dt: float
    dx: float
    time_zero_row: int

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise TheoryError("Database must hold at least one entry")
        seen = set()
        for entry in entries:
            if entry.key in seen:
                raise DuplicateEntry(
                    f"Duplicate entry: depth={entry.depth} size={entry.size.designation}"
                )
            seen.add(entry.key)
        object.__setattr__(self, 'entries', entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def depths(self) -> List[float]:
        return sorted({entry.depth for entry in self.entries})

    @property
    def sizes(self) -> List[RebarSize]:
        return sorted({entry.size for entry in self.entries}, key=lambda s: s.diameter)

    def lookup(self, depth: float, designation: str) -> DatabaseEntry:
        """
        Find the entry for a (depth, designation) pair.

        Raises:
            UnknownEntry: If the pair is not in the database
        """
        key = entry_key(depth, designation)
        for entry in self.entries:
            if entry.key == key:
                return entry
        raise UnknownEntry(f"No entry for depth={depth} size={designation}")

    def matches_config(self, config: RadarConfig, rel_tol: float = 1e-9) -> bool:
        return (
            math.isclose(self.velocity, config.wave_velocity, rel_tol=rel_tol)
            and math.isclose(self.dt, config.dt, rel_tol=rel_tol)
            and math.isclose(self.dx, config.dx, rel_tol=rel_tol)
            and self.time_zero_row == config.time_zero_row
        )


def curve_half_width(config: RadarConfig) -> int:
    """Columns either side of the apex covering half the aperture."""
    return max(1, int(math.ceil(config.aperture / 2.0 / config.dx - 1e-9)))


def theoretical_curve(depth: float, size: RebarSize, config: RadarConfig,
                      half_width: Optional[int] = None) -> np.ndarray:
    """Apex-centered arrival rows of one bar, as stored in the database."""
    if half_width is None:
        half_width = curve_half_width(config)
    # |offset| makes the curve exactly symmetric
    offsets = np.abs(np.arange(-half_width, half_width + 1, dtype=float)) * config.dx
    times = travel_time(offsets, 0.0, depth, size.radius, config.wave_velocity)
    return config.time_zero_row + times / config.dt


def build_database(depths: Iterable[float], catalog: Sequence[RebarSize],
                   config: RadarConfig) -> HyperbolaDatabase:
    """
    Build one theoretical curve per (depth, size) pair.

    Args:
        depths: Cover depths in meters
        catalog: Rebar sizes to include
        config: Radar calibration shared with the scans to be matched

    Returns:
        HyperbolaDatabase ordered by depth then diameter

    Raises:
        TheoryError: If depths or catalog is empty
        DuplicateEntry: If a (depth, size) pair repeats
        InvalidGeometry: If a depth is not positive
    """
    depths = [float(d) for d in depths]
    catalog = list(catalog)
    if not depths or not catalog:
        raise TheoryError("Database needs at least one depth and one size")

    keys: Dict[Tuple[float, str], None] = {}
    for depth in depths:
        for size in catalog:
            key = entry_key(depth, size.designation)
            if key in keys:
                raise DuplicateEntry(f"Duplicate entry: depth={depth} size={size.designation}")
            keys[key] = None

    half_width = curve_half_width(config)
    entries = []
    for depth in sorted(depths):
        for size in sorted(catalog, key=lambda s: s.diameter):
            entries.append(DatabaseEntry(depth, size, theoretical_curve(depth, size, config, half_width)))

    logger.info(
        f"Built hyperbola database: {len(depths)} depths x {len(catalog)} sizes = "
        f"{len(entries)} entries, half width {half_width} columns"
    )
    return HyperbolaDatabase(
        entries=tuple(entries),
        velocity=config.wave_velocity,
        dt=config.dt,
        dx=config.dx,
        time_zero_row=config.time_zero_row,
    )
