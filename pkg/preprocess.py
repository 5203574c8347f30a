"""
Direct-wave removal.

The direct wave is the brightest horizontal band at the top of a B-scan. It
is located through the row-mean envelope, modeled from the columns whose
intensity at the transition row is the most frequent one, subtracted, and
the result re-enhanced and opened to remove speckle.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from core import BScan, GprBarError
from logger import get_logger

logger = get_logger(__name__)

N_LEVELS = 256
DEFAULT_WINDOW_FRACTION = 0.25
DEFAULT_OPEN_SIZE = 3


class PreprocessError(GprBarError):
    """Base exception for direct-wave removal."""
    pass


class ScanTooShort(PreprocessError):
    """Exception raised when a scan has too few time samples to split."""
    pass


class NoReferenceColumns(PreprocessError):
    """Exception raised when no column qualifies as a direct-wave reference."""
    pass


class InvalidStructuringElement(PreprocessError):
    """Exception raised for an even or too small opening element."""
    pass


@dataclass(frozen=True)
class RegionSplit:
    """Rows < transition_row hold the direct wave; the rest hold reflections."""

    transition_row: int


@dataclass(frozen=True)
class DirectWaveModel:
    """Column-constant synthetic direct wave for rows 0..transition_row-1."""

    profile: np.ndarray
    reference_columns: Tuple[int, ...]
    mode_intensity: float
    transition_row: int

    def as_image(self, n_traces: int, n_samples: int) -> np.ndarray:
        """The model spread over a full grid (zero below the transition row)."""
        image = np.zeros((n_samples, n_traces))
        image[:self.transition_row, :] = self.profile[:, None]
        return image


def quantize(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] intensities to integer levels 0..255."""
    return np.clip(np.rint(np.asarray(values, dtype=float) * (N_LEVELS - 1)), 0, N_LEVELS - 1).astype(int)


def equalize(scan: BScan) -> BScan:
    """
    Global 256-level histogram equalization.

    Each level maps to (cdf(level) - cdf_min) / (N - cdf_min), so the
    lowest occupied level goes to 0 and the highest to 1. An image with a
    single occupied level is returned unchanged.
    """
    levels = quantize(scan.intensities)
    hist = np.bincount(levels.ravel(), minlength=N_LEVELS)
    if np.count_nonzero(hist) <= 1:
        return scan

    cdf = np.cumsum(hist)
    cdf_min = cdf[hist > 0][0]
    lut = (cdf - cdf_min) / float(cdf[-1] - cdf_min)
    return scan.replace(np.clip(lut[levels], 0.0, 1.0))


def find_transition_row(scan: BScan, window_fraction: float = DEFAULT_WINDOW_FRACTION) -> RegionSplit:
    """
    Locate the low-intensity gap between the direct wave and the reflections.

    Args:
        scan: Equalized B-scan
        window_fraction: Search window below the envelope peak, as a fraction
            of n_samples

    Returns:
        RegionSplit with 0 < transition_row < n_samples

    Raises:
        ScanTooShort: If the scan has fewer than 4 time samples
    """
    n_samples = scan.shape[0]
    if n_samples < 4:
        raise ScanTooShort(f"Need at least 4 time samples, got {n_samples}")

    row_means = scan.intensities.mean(axis=1)
    peak = int(np.argmax(row_means))
    window = max(1, int(round(window_fraction * n_samples)))
    first = peak + 1
    last = min(peak + window, n_samples - 1)
    if first > last:
        # envelope peaks on the last row; nothing below it to search
        logger.warning(f"Row-mean peak at last row {peak}; using it as transition")
        return RegionSplit(max(1, n_samples - 1))

    rows = np.arange(first, last + 1)
    means = row_means[rows]
    interior = [
        i for i in range(len(rows))
        if rows[i] < last
        and row_means[rows[i]] <= row_means[rows[i] - 1]
        and row_means[rows[i]] <= row_means[rows[i] + 1]
    ]
    if interior:
        best = min(interior, key=lambda i: (means[i], i))
        transition = int(rows[best])
    else:
        transition = int(rows[int(np.argmin(means))])

    logger.debug(f"Row-mean peak at {peak}, transition row {transition}")
    return RegionSplit(transition)


def estimate_direct_wave(scan: BScan, split: RegionSplit) -> DirectWaveModel:
    """
    Model the direct wave from the most frequent transition-row intensity.

    Args:
        scan: Equalized B-scan
        split: Output of find_transition_row

    Returns:
        DirectWaveModel whose profile is the mean over reference columns

    Raises:
        NoReferenceColumns: If no column falls in the mode bin
    """
    t_tp = split.transition_row
    levels = quantize(scan.intensities[t_tp])
    counts = np.bincount(levels, minlength=N_LEVELS)
    # argmax returns the first maximum, i.e. the lowest-intensity bin on ties
    mode_level = int(np.argmax(counts))
    reference = np.flatnonzero(levels == mode_level)
    if reference.size == 0:
        raise NoReferenceColumns(f"No reference columns at transition row {t_tp}")

    profile = scan.intensities[:t_tp, reference].mean(axis=1)
    logger.debug(
        f"Direct-wave model: mode level {mode_level}, {reference.size} reference columns"
    )
    return DirectWaveModel(
        profile=np.clip(profile, 0.0, 1.0),
        reference_columns=tuple(int(c) for c in reference),
        mode_intensity=mode_level / (N_LEVELS - 1),
        transition_row=t_tp,
    )


def subtract_direct_wave(scan: BScan, model: DirectWaveModel) -> BScan:
    """Subtract the column-constant profile above the transition row, clamping at 0."""
    grid = np.array(scan.intensities, copy=True)
    t_tp = model.transition_row
    grid[:t_tp] = np.maximum(grid[:t_tp] - model.profile[:, None], 0.0)
    return scan.replace(grid)


def open_operation(image: np.ndarray, se_size: int = DEFAULT_OPEN_SIZE) -> np.ndarray:
    """
    Grayscale opening with a square structuring element.

    Border pixels are handled by edge replication.

    Raises:
        InvalidStructuringElement: If se_size is even or below 3
    """
    if se_size < 3 or se_size % 2 == 0:
        raise InvalidStructuringElement(f"Structuring element must be odd and >= 3, got {se_size}")
    image = np.asarray(image)
    opened = ndimage.grey_opening(image.astype(float), size=(se_size, se_size), mode='nearest')
    return opened.astype(image.dtype)


@dataclass(frozen=True)
class DirectWaveRemoval:
    """Every intermediate of remove_direct_wave, for inspection and dumps."""

    equalized: BScan
    split: RegionSplit
    model: DirectWaveModel
    subtracted: BScan
    enhanced: BScan
    cleaned: BScan


def remove_direct_wave_stages(scan: BScan, window_fraction: float = DEFAULT_WINDOW_FRACTION,
                              se_size: int = DEFAULT_OPEN_SIZE) -> DirectWaveRemoval:
    """Run direct-wave removal keeping all intermediate scans."""
    equalized = equalize(scan)
    split = find_transition_row(equalized, window_fraction)
    model = estimate_direct_wave(equalized, split)
    subtracted = subtract_direct_wave(equalized, model)
    enhanced = equalize(subtracted)
    cleaned = enhanced.replace(open_operation(enhanced.intensities, se_size))

    logger.info(
        f"Direct wave removed: transition row {split.transition_row}, "
        f"{len(model.reference_columns)} reference columns"
    )
    return DirectWaveRemoval(equalized, split, model, subtracted, enhanced, cleaned)


def remove_direct_wave(scan: BScan, window_fraction: float = DEFAULT_WINDOW_FRACTION,
                       se_size: int = DEFAULT_OPEN_SIZE) -> BScan:
    """
    Equalize, model and subtract the direct wave, re-equalize and open.

    Args:
        scan: Raw normalized B-scan
        window_fraction: Transition search window (fraction of n_samples)
        se_size: Opening element side

    Returns:
        Cleaned B-scan in [0, 1]
    """
    return remove_direct_wave_stages(scan, window_fraction, se_size).cleaned
