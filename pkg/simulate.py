"""
Seeded synthetic B-scan generator with known ground truth.

The forward model is deliberately simple: every trace receives one Ricker
wavelet per bar, centered on the analytic two-way travel time and scaled by
1/(two-way path length), plus a column-constant direct wave at time zero.
Intensity is the positive (bright) phase of the summed trace, with optional
Gaussian noise, normalized to [0, 1].
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core import (
    BScan,
    GprBarError,
    RadarConfig,
    RebarPlacement,
    RebarSize,
    catalog_slice,
    normalize,
    rebar_size,
)
from logger import get_logger
from theory import travel_time

logger = get_logger(__name__)

DIRECT_WAVE_AMPLITUDE = 1.0
# strongest rebar response relative to the direct wave
REBAR_PEAK_RATIO = 0.5
BARS_PER_CASE = 5
MIN_BAR_SPACING = 0.4

# Table of experiment cases: depth (m) and first/last designation
CASE_TABLE: Tuple[Tuple[float, str, str], ...] = (
    (0.06, '#3', '#8'),
    (0.08, '#3', '#11'),
    (0.10, '#3', '#11'),
    (0.12, '#3', '#14'),
    (0.14, '#3', '#18'),
)
FIGURE_DEPTHS = (0.06, 0.08, 0.10, 0.12, 0.14)


class SimulationError(GprBarError):
    """Base exception for scene synthesis."""
    pass


class PlacementOutOfBounds(SimulationError):
    """Exception raised when a bar lies outside the scanned aperture."""
    pass


def ricker(frequency: float, times) -> np.ndarray:
    """
    Zero-phase Ricker wavelet with peak value 1 at t = 0.

    Args:
        frequency: Center (peak) frequency in Hz
        times: Time(s) relative to the wavelet center in seconds

    Returns:
        Wavelet samples, same shape as times
    """
    arg = (math.pi * frequency * np.asarray(times, dtype=float)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def default_direct_wave_rows(config: RadarConfig) -> int:
    """Rows 0..time_zero_row plus the main-lobe half width."""
    return min(config.n_samples, config.time_zero_row + config.main_lobe_rows)


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to synthesize one B-scan deterministically."""

    config: RadarConfig = field(default_factory=RadarConfig)
    placements: Tuple[RebarPlacement, ...] = ()
    noise_sigma: float = 0.0
    seed: int = 0
    direct_wave_rows: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'placements', tuple(self.placements))
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise SimulationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.direct_wave_rows is None:
            object.__setattr__(self, 'direct_wave_rows', default_direct_wave_rows(self.config))
        if self.direct_wave_rows < 1:
            raise SimulationError(f"direct_wave_rows must be >= 1, got {self.direct_wave_rows}")

    def to_dict(self) -> dict:
        """Scan metadata (calibration at the top level) plus the scene fields."""
        data = self.config.to_dict()
        data.update({
            'placements': [p.to_dict() for p in self.placements],
            'noise_sigma': self.noise_sigma,
            'seed': self.seed,
            'direct_wave_rows': self.direct_wave_rows,
        })
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'SceneSpec':
        """
        Scene from to_dict output or any scan metadata file.

        Missing scene fields take their defaults, so the metadata of an
        external scan yields an empty noise-free scene on its grid.

        Raises:
            SimulationError: On missing or malformed fields
        """
        try:
            rows = data.get('direct_wave_rows')
            return cls(
                config=RadarConfig.from_dict(data),
                placements=tuple(RebarPlacement.from_dict(p) for p in data.get('placements', [])),
                noise_sigma=float(data.get('noise_sigma', 0.0)),
                seed=int(data.get('seed', 0)),
                direct_wave_rows=None if rows is None else int(rows),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SimulationError(f"Invalid scene description: {e}") from e


def synthesize_bscan(spec: SceneSpec) -> Tuple[BScan, Tuple[RebarPlacement, ...]]:
    """
    Synthesize a B-scan for a scene.

    Args:
        spec: Scene description (calibration, bars, noise, seed)

    Returns:
        Tuple of (BScan, ground-truth placements)

    Raises:
        PlacementOutOfBounds: If a bar lies outside the scanned aperture
    """
    config = spec.config
    for placement in spec.placements:
        if not placement.inside(config):
            raise PlacementOutOfBounds(
                f"Bar at x0={placement.x0} m outside aperture [0, {config.aperture}] m"
            )

    rows = np.arange(config.n_samples, dtype=float)
    x = np.arange(config.n_traces, dtype=float) * config.dx
    v = config.wave_velocity
    signal = np.zeros(config.shape)

    # Direct wave: same wavelet at time zero, constant across columns
    direct = DIRECT_WAVE_AMPLITUDE * ricker(
        config.center_frequency, (rows - config.time_zero_row) * config.dt
    )
    direct[spec.direct_wave_rows:] = 0.0
    signal += direct[:, None]

    if spec.placements:
        shortest_path = 2.0 * min(p.depth for p in spec.placements)
        for placement in spec.placements:
            times = travel_time(x, placement.x0, placement.depth, placement.size.radius, v)
            centers = config.time_zero_row + np.rint(times / config.dt)
            amplitude = REBAR_PEAK_RATIO * DIRECT_WAVE_AMPLITUDE * shortest_path / (v * times)
            wavelets = ricker(config.center_frequency, (rows[:, None] - centers[None, :]) * config.dt)
            signal += amplitude[None, :] * wavelets

    intensity = np.maximum(signal, 0.0)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        intensity = intensity + rng.normal(0.0, spec.noise_sigma, size=intensity.shape)

    logger.debug(
        f"Synthesized {config.n_samples}x{config.n_traces} scan with "
        f"{len(spec.placements)} bars, noise {spec.noise_sigma}"
    )
    return BScan(normalize(intensity), config), spec.placements


def evenly_spaced(config: RadarConfig, count: int) -> List[float]:
    """Lateral bar positions at the centers of count equal aperture slots."""
    return [config.aperture * (k + 0.5) / count for k in range(count)]


def figure_scene(config: Optional[RadarConfig] = None, noise_sigma: float = 0.0,
                 seed: int = 0) -> SceneSpec:
    """Five #7 bars at cover depths 6 to 14 cm, evenly spaced."""
    config = config or RadarConfig()
    size = rebar_size('#7')
    placements = tuple(
        RebarPlacement(x0, depth, size)
        for x0, depth in zip(evenly_spaced(config, len(FIGURE_DEPTHS)), FIGURE_DEPTHS)
    )
    return SceneSpec(config=config, placements=placements, noise_sigma=noise_sigma, seed=seed)


@dataclass(frozen=True)
class CaseSpec:
    """One experiment case: five identical bars of a single depth and size."""

    case_id: int
    depth: float
    size: RebarSize
    scene: SceneSpec


@dataclass(frozen=True)
class CaseSuite:
    """The full experiment: ordered cases with their scenes."""

    cases: Tuple[CaseSpec, ...]

    def __len__(self) -> int:
        return len(self.cases)

    @property
    def n_bars(self) -> int:
        return sum(len(case.scene.placements) for case in self.cases)

    def select(self, case_ids: Sequence[int]) -> 'CaseSuite':
        """Sub-suite holding only the given case ids, in suite order."""
        wanted = set(case_ids)
        return CaseSuite(tuple(case for case in self.cases if case.case_id in wanted))


def build_case_suite(config: Optional[RadarConfig] = None, seed: int = 0,
                     noise_sigma: float = 0.0) -> CaseSuite:
    """
    Build the 45-case suite (225 bars) of the depth/size experiment.

    Args:
        config: Radar calibration for every case
        seed: Base seed; case k uses seed + k
        noise_sigma: Noise level applied to every case

    Returns:
        CaseSuite ordered by depth then diameter
    """
    config = config or RadarConfig()
    positions = evenly_spaced(config, BARS_PER_CASE)
    spacing = positions[1] - positions[0]
    if spacing < MIN_BAR_SPACING:
        logger.warning(
            f"Bar spacing {spacing:.3f} m below {MIN_BAR_SPACING} m; hyperbolas may overlap"
        )

    cases = []
    case_id = 0
    for depth, first, last in CASE_TABLE:
        for size in catalog_slice(first, last):
            case_id += 1
            placements = tuple(RebarPlacement(x0, depth, size) for x0 in positions)
            scene = SceneSpec(
                config=config,
                placements=placements,
                noise_sigma=noise_sigma,
                seed=seed + case_id,
            )
            cases.append(CaseSpec(case_id, depth, size, scene))

    suite = CaseSuite(tuple(cases))
    logger.info(f"Built case suite: {len(suite)} cases, {suite.n_bars} bars, spacing {spacing:.3f} m")
    return suite
