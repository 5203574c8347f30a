"""
PGM/PPM renderings of scans, masks, labels and matched outlines.

Grayscale stages are written as binary PGM (P5, maxval 255) and colour
overlays as binary PPM (P6) through Pillow.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from skimage.draw import line as draw_line

from core import BScan, GprBarError, RebarPlacement
from extract import BinaryMask, HyperbolaOutline, LabeledHyperbolas
from logger import get_logger
from match import RebarEstimate
from pipeline import ScanResult
from theory import HyperbolaDatabase, travel_time

logger = get_logger(__name__)

OUTLINE_COLOR = (255, 0, 0)
CURVE_COLOR = (0, 255, 0)
MASK_COLOR = (0, 0, 255)
TRUTH_COLOR = (255, 255, 0)
TRUTH_ARM = 4

# Label colours cycle through this list
LABEL_PALETTE: Tuple[Tuple[int, int, int], ...] = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
)

STAGE_FILES = (
    '01_raw.pgm',
    '02_direct_wave_model.pgm',
    '03_subtracted.pgm',
    '04_binarized.pgm',
    '05_filled.pgm',
    '06_labeled.ppm',
    '07_outlines.ppm',
)


class RenderError(GprBarError):
    """Exception raised when an image cannot be produced or written."""
    pass


def to_gray(values: np.ndarray) -> np.ndarray:
    """[0, 1] intensities (or a boolean mask) as 8-bit levels."""
    values = np.asarray(values)
    if values.dtype == bool:
        return np.where(values, 255, 0).astype(np.uint8)
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def to_rgb(values: np.ndarray) -> np.ndarray:
    gray = to_gray(values)
    return np.repeat(gray[:, :, None], 3, axis=2)


def label_image(labeled: LabeledHyperbolas) -> np.ndarray:
    """Labels painted with LABEL_PALETTE on a black background."""
    grid = labeled.grid
    rgb = np.zeros(grid.shape + (3,), dtype=np.uint8)
    for label in range(1, labeled.count + 1):
        rgb[grid == label] = LABEL_PALETTE[(label - 1) % len(LABEL_PALETTE)]
    return rgb


def draw_outlines(rgb: np.ndarray, outlines: Sequence[HyperbolaOutline],
                  color: Tuple[int, int, int] = OUTLINE_COLOR) -> np.ndarray:
    """Paint outline points in place."""
    n_rows, n_cols = rgb.shape[:2]
    for outline in outlines:
        rows = np.rint(outline.rows).astype(int)
        cols = outline.cols
        keep = (rows >= 0) & (rows < n_rows) & (cols >= 0) & (cols < n_cols)
        rgb[rows[keep], cols[keep]] = color
    return rgb


def draw_curve(rgb: np.ndarray, cols: np.ndarray, rows: np.ndarray,
               color: Tuple[int, int, int] = CURVE_COLOR) -> np.ndarray:
    """Paint a polyline through (row, col) points in place, clipped to the image."""
    n_rows, n_cols = rgb.shape[:2]
    r = np.rint(rows).astype(int)
    c = np.rint(cols).astype(int)
    for r0, c0, r1, c1 in zip(r[:-1], c[:-1], r[1:], c[1:]):
        rr, cc = draw_line(int(r0), int(c0), int(r1), int(c1))
        keep = (rr >= 0) & (rr < n_rows) & (cc >= 0) & (cc < n_cols)
        rgb[rr[keep], cc[keep]] = color
    return rgb


def draw_truths(rgb: np.ndarray, scan: BScan, truths: Sequence[RebarPlacement],
                color: Tuple[int, int, int] = TRUTH_COLOR) -> np.ndarray:
    """Paint a plus sign at the true apex of every bar in place."""
    config = scan.config
    n_rows, n_cols = rgb.shape[:2]
    for placement in truths:
        t = travel_time(placement.x0, placement.x0, placement.depth,
                        placement.size.radius, config.wave_velocity)
        row = int(round(config.time_zero_row + t / config.dt))
        col = placement.apex_col(config)
        arm = np.arange(-TRUTH_ARM, TRUTH_ARM + 1)
        for rr, cc in ((row + arm, np.full(arm.size, col)), (np.full(arm.size, row), col + arm)):
            keep = (rr >= 0) & (rr < n_rows) & (cc >= 0) & (cc < n_cols)
            rgb[rr[keep], cc[keep]] = color
    return rgb


def overlay(scan: BScan, outlines: Sequence[HyperbolaOutline] = (),
            estimates: Sequence[RebarEstimate] = (), db: Optional[HyperbolaDatabase] = None,
            mask: Optional[BinaryMask] = None,
            truths: Sequence[RebarPlacement] = ()) -> np.ndarray:
    """
    Scan in gray with the mask in blue, best-match curves in green,
    outlines in red and true apexes in yellow on top.
    """
    rgb = to_rgb(scan.intensities)
    if mask is not None:
        if mask.shape != scan.shape:
            raise RenderError(f"Mask shape {mask.shape} does not match scan {scan.shape}")
        rgb[mask.pixels] = MASK_COLOR
    if estimates:
        if db is None:
            raise RenderError("Drawing estimates needs the hyperbola database")
        for estimate in estimates:
            entry = db.lookup(estimate.depth, estimate.size.designation)
            cols, rows = entry.placed(estimate.apex_col)
            draw_curve(rgb, cols, rows)
    draw_outlines(rgb, outlines)
    draw_truths(rgb, scan, truths)
    return rgb


def save_image(pixels: np.ndarray, path) -> Path:
    """
    Write a uint8 grid as PGM (2-D) or PPM (H x W x 3).

    Raises:
        RenderError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(path, format='PPM')
    except OSError as e:
        logger.error(f"IO error writing {path}: {e}")
        raise RenderError(f"Cannot write {path}: {e}") from e
    logger.debug(f"Wrote {path}")
    return path


def read_mask_image(path) -> BinaryMask:
    """Read a PGM written by save_image back as a mask (level > 127)."""
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert('L'))
    except OSError as e:
        raise RenderError(f"Cannot read {path}: {e}") from e
    return BinaryMask(pixels > 127)


def dump_stages(result: ScanResult, directory) -> List[Path]:
    """
    Write one image per pipeline stage.

    Args:
        result: Output of pipeline.run_scan
        directory: Target directory (created if missing)

    Returns:
        Paths in stage order (see STAGE_FILES)
    """
    directory = Path(directory)
    n_samples, n_traces = result.raw.shape
    model = result.removal.model.as_image(n_traces, n_samples)

    final = to_rgb(result.removal.cleaned.intensities)
    draw_outlines(final, result.outlines)

    images: Dict[str, np.ndarray] = {
        STAGE_FILES[0]: to_gray(result.raw.intensities),
        STAGE_FILES[1]: to_gray(model),
        STAGE_FILES[2]: to_gray(result.removal.subtracted.intensities),
        STAGE_FILES[3]: to_gray(result.binarized.pixels),
        STAGE_FILES[4]: to_gray(result.filled.pixels),
        STAGE_FILES[5]: label_image(result.labeled),
        STAGE_FILES[6]: final,
    }
    paths = [save_image(images[name], directory / name) for name in STAGE_FILES]
    logger.info(f"Dumped {len(paths)} stage images to {directory}")
    return paths
