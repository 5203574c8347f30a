"""
Per-scan orchestration: raw B-scan to hyperbola outlines.

run_scan is shared by the `process` command and by suite evaluation; it keeps
every intermediate stage so the CLI can dump them as images.
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

from config import RunConfig, load_config
from core import BScan
from extract import (
    BinaryMask,
    DroppedOutline,
    HyperbolaOutline,
    IntersectionPoint,
    LabeledHyperbolas,
    binarize_background,
    detect_intersections,
    extract_outlines,
    fill_gaps,
    remove_small_segments,
    separate_hyperbolas,
)
from logger import get_logger
from preprocess import DirectWaveRemoval, remove_direct_wave_stages
from utils import format_elapsed

logger = get_logger(__name__)


@dataclass(frozen=True)
class ScanResult:
    """All stages of one processed scan."""

    raw: BScan
    removal: DirectWaveRemoval
    binarized: BinaryMask
    filled: BinaryMask
    intersections: List[IntersectionPoint]
    labeled: LabeledHyperbolas
    outlines: List[HyperbolaOutline]
    dropped: List[DroppedOutline] = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def run_scan(scan: BScan, config: Optional[RunConfig] = None, seed: Optional[int] = None) -> ScanResult:
    """
    Orchestrate direct-wave removal, extraction and outline tracing.

    Args:
        scan: Raw normalized B-scan
        config: Pipeline parameters (defaults to the loaded configuration)
        seed: RANSAC seed (defaults to config.seed)

    Returns:
        ScanResult with every intermediate stage
    """
    config = config or load_config()
    seed = config.seed if seed is None else seed
    start_time = time.monotonic()

    stats = {
        'transition_row': 0,
        'mask_pixels': 0,
        'filled_pixels': 0,
        'intersections': 0,
        'labels': 0,
        'outlines': 0,
        'dropped': 0,
        'processing_time': 0.0,
    }

    removal = remove_direct_wave_stages(scan, config.window_fraction, config.open_size)
    stats['transition_row'] = removal.split.transition_row

    binarized = binarize_background(removal.cleaned, removal.split, config.b)
    stats['mask_pixels'] = binarized.count()

    filled = fill_gaps(binarized, config.fill_kernel, config.fill_threshold, config.fill_max_iters)
    filled = remove_small_segments(filled, config.min_segment_pixels)
    stats['filled_pixels'] = filled.count()

    intersections = detect_intersections(
        filled,
        window=config.ransac_window,
        stride=config.ransac_stride,
        inlier_distance=config.ransac_inlier_distance,
        max_trials=config.ransac_max_trials,
        min_inliers=config.ransac_min_inliers,
        max_lines=config.ransac_max_lines,
        min_slope=config.min_slope,
        slope_tolerance=config.slope_tolerance,
        merge_radius=config.merge_radius,
        arm_length=config.arm_length,
        seed=seed,
    )
    stats['intersections'] = len(intersections)

    labeled = separate_hyperbolas(
        filled, intersections, config.erosion_size, config.join_radius,
        apex_prominence=config.apex_prominence,
    )
    stats['labels'] = labeled.count

    dropped: List[DroppedOutline] = []
    outlines = []
    if labeled.count:
        outlines = extract_outlines(
            labeled, config.min_outline_points, config.outline_mode, dropped,
            intensities=scan.intensities, trace_ratio=config.trace_ratio,
        )
    else:
        logger.warning("No hyperbolas found in scan")
    stats['outlines'] = len(outlines)
    stats['dropped'] = len(dropped)
    stats['processing_time'] = time.monotonic() - start_time

    logger.info(
        f"Scan processed in {format_elapsed(stats['processing_time'])}: "
        f"t_tp={stats['transition_row']}, {stats['mask_pixels']} mask pixels, "
        f"{stats['intersections']} intersections, {stats['labels']} labels, "
        f"{stats['outlines']} outlines ({stats['dropped']} dropped)"
    )
    return ScanResult(scan, removal, binarized, filled, intersections, labeled,
                      outlines, dropped, stats)
