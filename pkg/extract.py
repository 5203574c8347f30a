"""
Hyperbola extraction: binarization, gap filling, separation and outlines.

The cleaned reflection region is thresholded, broken hyperbola segments are
reconnected with directional kernels, crossings of neighbouring hyperbolas
are located with RANSAC line fits and cut out, the pieces are regrouped into
one label per hyperbola, and each label is reduced to a per-column outline.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.signal import find_peaks
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from skimage.draw import line as draw_line
from skimage.measure import LineModelND, ransac
from skimage.morphology import remove_small_objects, skeletonize

from core import DEFAULT_DT, DEFAULT_DX, BScan, GprBarError, RadarConfig
from logger import get_logger
from preprocess import RegionSplit

logger = get_logger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
OUTLINE_MODES = ('peak', 'edge', 'crest')
DEFAULT_APEX_PROMINENCE = 5.0
DEFAULT_TRACE_RATIO = 0.5
# half height of the row window searched when tracing a wing one column further
TRACE_SEARCH_ROWS = 3


class ExtractionError(GprBarError):
    """Base exception for hyperbola extraction."""
    pass


class InvalidThresholdFactor(ExtractionError):
    """Exception raised when the binarization factor b is not above 1."""
    pass


class InvalidMask(ExtractionError):
    """Exception raised for masks of the wrong shape or for bad kernel settings."""
    pass


@dataclass(frozen=True)
class BinaryMask:
    """Foreground pixels of one scan (True = hyperbola)."""

    pixels: np.ndarray
    config: Optional[RadarConfig] = None

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=bool, copy=True)
        if pixels.ndim != 2:
            raise InvalidMask(f"Mask must be 2-D, got shape {pixels.shape}")
        if self.config is not None and pixels.shape != self.config.shape:
            raise InvalidMask(f"Mask shape {pixels.shape} does not match config {self.config.shape}")
        pixels.flags.writeable = False
        object.__setattr__(self, 'pixels', pixels)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def count(self) -> int:
        return int(self.pixels.sum())

    def replace(self, pixels: np.ndarray) -> 'BinaryMask':
        return BinaryMask(pixels, self.config)


@dataclass(frozen=True)
class IntersectionPoint:
    """
    Crossing of two hyperbola wings.

    left_slope belongs to the wing of the hyperbola whose apex lies to the
    left (positive, rows increase to the right); right_slope to the other.
    """

    row: int
    col: int
    left_slope: float
    right_slope: float


@dataclass(frozen=True)
class LabeledHyperbolas:
    """Label grid with 0 as background and hyperbolas labeled 1..count."""

    grid: np.ndarray
    count: int
    config: Optional[RadarConfig] = None

    def __post_init__(self):
        grid = np.array(self.grid, dtype=int, copy=True)
        present = np.unique(grid[grid > 0])
        if not np.array_equal(present, np.arange(1, self.count + 1)):
            raise InvalidMask(f"Labels must be contiguous 1..{self.count}")
        grid.flags.writeable = False
        object.__setattr__(self, 'grid', grid)


@dataclass(frozen=True)
class HyperbolaOutline:
    """Per-column outline of one labeled hyperbola, sorted by column."""

    label: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float, copy=True)
        cols = np.array(self.cols, dtype=int, copy=True)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise InvalidMask("Outline rows and cols must be matching 1-D arrays")
        if cols.size and np.any(np.diff(cols) <= 0):
            raise InvalidMask("Outline columns must be strictly increasing")
        rows.flags.writeable = False
        cols.flags.writeable = False
        object.__setattr__(self, 'rows', rows)
        object.__setattr__(self, 'cols', cols)

    def __len__(self) -> int:
        return int(self.cols.size)

    @property
    def apex_index(self) -> int:
        # argmin keeps the first (leftmost) minimum
        return int(np.argmin(self.rows))

    @property
    def apex_row(self) -> float:
        return float(self.rows[self.apex_index])

    @property
    def apex_col(self) -> int:
        return int(self.cols[self.apex_index])

    @property
    def apex_center(self) -> float:
        """
        Sub-column apex position from the symmetry of the two wings.

        Each wing is made monotone outward from the apex; for every integer
        row level reached by both wings the first column at or below that
        level is taken on either side, and the mean midpoint of those column
        pairs is returned. Falls back to apex_col when the apex sits on an
        end of the outline or the wings share no level.
        """
        i = self.apex_index
        if i == 0 or i == len(self) - 1:
            return float(self.apex_col)
        left_rows = np.maximum.accumulate(self.rows[i::-1])
        right_rows = np.maximum.accumulate(self.rows[i:])
        top = min(left_rows[-1], right_rows[-1])
        levels = np.arange(math.floor(self.apex_row) + 1, math.floor(top) + 1, dtype=float)
        if levels.size == 0:
            return float(self.apex_col)
        left = self.cols[i::-1][np.searchsorted(left_rows, levels, side='left')]
        right = self.cols[i:][np.searchsorted(right_rows, levels, side='left')]
        return round(float(np.mean((left + right) / 2.0)), 3)


@dataclass(frozen=True)
class DroppedOutline:
    """A label discarded by extract_outlines and why."""

    label: int
    n_points: int
    reason: str


def binarize_background(scan: BScan, split: RegionSplit, b: float = 1.5) -> BinaryMask:
    """
    Keep bright pixels of the reflection region.

    A pixel at row >= t_tp is kept iff I > (I_max - I_mean) / b + I_mean,
    with I_max and I_mean taken over the reflection region only.

    Raises:
        InvalidThresholdFactor: If b <= 1
    """
    if not b > 1.0:
        raise InvalidThresholdFactor(f"Threshold factor b must exceed 1, got {b}")

    t_tp = split.transition_row
    region = scan.intensities[t_tp:]
    if region.size == 0:
        raise InvalidMask(f"Reflection region below row {t_tp} is empty")

    i_max = float(region.max())
    i_mean = float(region.mean())
    threshold = (i_max - i_mean) / b + i_mean

    pixels = np.zeros(scan.shape, dtype=bool)
    pixels[t_tp:] = region > threshold
    logger.debug(
        f"Binarized: I_max={i_max:.4f} I_mean={i_mean:.4f} threshold={threshold:.4f}, "
        f"{int(pixels.sum())} pixels kept"
    )
    return BinaryMask(pixels, scan.config)


def _directional_kernels(kernel_size: int) -> Dict[str, np.ndarray]:
    """Half-diagonal averaging kernels for the four corners of a k x k window."""
    c = kernel_size // 2
    kernels = {name: np.zeros((kernel_size, kernel_size)) for name in ('ul', 'lr', 'ur', 'll')}
    for m in range(1, c + 1):
        kernels['ul'][c - m, c - m] = 1.0 / c
        kernels['lr'][c + m, c + m] = 1.0 / c
        kernels['ur'][c - m, c + m] = 1.0 / c
        kernels['ll'][c + m, c - m] = 1.0 / c
    return kernels


def fill_gaps(mask: BinaryMask, kernel_size: int = 5, threshold: float = 0.1,
              max_iters: int = 10) -> BinaryMask:
    """
    Reconnect aligned segments across small gaps.

    Each background pixel gets a descending score mean(upper-left) x
    mean(lower-right) and an ascending score mean(upper-right) x
    mean(lower-left), the means taken along the corner halves of the
    kernel's diagonals. Pixels whose score exceeds threshold are set; the
    rule is applied until nothing changes or max_iters passes have run.

    Raises:
        InvalidMask: If kernel_size is even or < 3, or threshold not in (0, 1)
    """
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise InvalidMask(f"Kernel size must be odd and >= 3, got {kernel_size}")
    if not 0.0 < threshold < 1.0:
        raise InvalidMask(f"Fill threshold must lie in (0, 1), got {threshold}")

    kernels = _directional_kernels(kernel_size)
    pixels = mask.pixels.copy()
    iterations = 0
    for iterations in range(1, max_iters + 1):
        image = pixels.astype(float)
        means = {
            name: ndimage.correlate(image, kernel, mode='constant', cval=0.0)
            for name, kernel in kernels.items()
        }
        descending = means['ul'] * means['lr']
        ascending = means['ur'] * means['ll']
        fill = ~pixels & ((descending > threshold) | (ascending > threshold))
        if not fill.any():
            iterations -= 1
            break
        pixels |= fill

    logger.debug(f"Gap filling: {int(pixels.sum()) - mask.count()} pixels added in {iterations} passes")
    return mask.replace(pixels)


def remove_small_segments(mask: BinaryMask, min_pixels: int = 20) -> BinaryMask:
    """Clear 8-connected components smaller than min_pixels."""
    if min_pixels <= 1 or not mask.pixels.any():
        return mask
    cleaned = remove_small_objects(mask.pixels.copy(), min_size=min_pixels, connectivity=2)
    logger.debug(f"Removed {mask.count() - int(cleaned.sum())} pixels in small segments")
    return mask.replace(cleaned)


@dataclass(frozen=True)
class _FittedLine:
    origin: np.ndarray
    direction: np.ndarray
    slope: float


def _window_starts(size: int, window: int, stride: int) -> List[int]:
    if size <= window:
        return [0]
    starts = list(range(0, size - window + 1, stride))
    if starts[-1] != size - window:
        starts.append(size - window)
    return starts


def _fit_lines(points: np.ndarray, rng_key: Sequence[int], inlier_distance: float,
               max_trials: int, min_inliers: int, max_lines: int) -> List[_FittedLine]:
    """Sequential RANSAC: fit a line, drop its inliers, repeat."""
    lines = []
    remaining = points
    for k in range(max_lines):
        if len(remaining) < max(min_inliers, 2):
            break
        rng = np.random.default_rng([*rng_key, k])
        model, inliers = ransac(
            remaining,
            LineModelND,
            min_samples=2,
            residual_threshold=inlier_distance,
            max_trials=max_trials,
            rng=rng,
        )
        if model is None or inliers is None or int(inliers.sum()) < min_inliers:
            break
        origin, direction = model.params
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.linalg.norm(direction)
        if abs(direction[0]) > 1e-9:
            lines.append(_FittedLine(np.asarray(origin, dtype=float), direction,
                                     float(direction[1] / direction[0])))
        remaining = remaining[~inliers]
    return lines


def _foreground_near(pixels: np.ndarray, row: float, col: float) -> bool:
    r = int(round(row))
    c = int(round(col))
    height, width = pixels.shape
    if not (0 <= r < height and 0 <= c < width):
        return False
    return bool(pixels[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2].any())


def _is_crossing(pixels: np.ndarray, point: np.ndarray, directions: Sequence[np.ndarray],
                 arm_length: float) -> bool:
    """Foreground at the point and along both lines on both sides of it."""
    col, row = point
    if not _foreground_near(pixels, row, col):
        return False
    for direction in directions:
        for sign in (1.0, -1.0):
            arm_col, arm_row = point + sign * arm_length * direction
            if not _foreground_near(pixels, arm_row, arm_col):
                return False
    return True


def _wing_asymmetry(s1: float, s2: float) -> float:
    """
    Tangent of the angle by which two opposite-sign lines miss being mirror
    images about the vertical; 0 for s2 == -s1.

    Steep wings of different depths cross with slopes like 4 and -3 whose
    plain sum is large although their angles differ by a few degrees.
    """
    return abs(s1 + s2) / (1.0 + abs(s1 * s2))


def _components(n_nodes: int, edges) -> np.ndarray:
    """Connected-component id of every node 0..n_nodes-1 of an undirected edge list."""
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    graph = coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_nodes, n_nodes)
    )
    return connected_components(graph, directed=False)[1]


def _line_crossing(a: _FittedLine, b: _FittedLine) -> Optional[np.ndarray]:
    system = np.column_stack([a.direction, -b.direction])
    if abs(np.linalg.det(system)) < 1e-9:
        return None
    step = np.linalg.solve(system, b.origin - a.origin)
    return a.origin + step[0] * a.direction


def detect_intersections(mask: BinaryMask, window: int = 31, stride: int = 8,
                         inlier_distance: float = 1.5, max_trials: int = 100,
                         min_inliers: int = 10, max_lines: int = 4, min_slope: float = 0.2,
                         slope_tolerance: float = 0.5, merge_radius: float = 10.0,
                         arm_length: float = 8.0, seed: int = 0) -> List[IntersectionPoint]:
    """
    Locate crossings of hyperbola wings with windowed RANSAC line fits.

    Lines are fitted to the mask skeleton in overlapping windows. Two lines
    of opposite slope sign, each at least min_slope steep and close to
    mirror images of each other (see _wing_asymmetry), give a crossing when
    their intersection lies inside the window and both wings continue on
    both sides of it for arm_length pixels. Candidates linked by chains of
    distances up to merge_radius are merged to their centroid.

    Args:
        mask: Binary mask after gap filling
        window: Window side in pixels
        stride: Window step in pixels
        inlier_distance: RANSAC perpendicular inlier distance in pixels
        max_trials: RANSAC iteration budget per line
        min_inliers: Minimum inliers for a fitted line
        max_lines: Maximum lines fitted per window
        min_slope: Minimum |slope| in rows per column
        slope_tolerance: Maximum wing asymmetry |s1 + s2| / (1 + |s1 * s2|)
        merge_radius: Distance below which crossings are merged
        arm_length: Distance along each line checked for continuing wings
        seed: Base seed for the RANSAC random source

    Returns:
        List of IntersectionPoint sorted by column then row
    """
    pixels = mask.pixels
    if not pixels.any():
        return []

    # skeletonize needs a writable array; mask pixels are read-only
    skeleton = skeletonize(np.array(pixels, dtype=bool))
    height, width = pixels.shape
    candidates: List[Tuple[float, float, float, float]] = []
    windows_fitted = 0

    for r0 in _window_starts(height, window, stride):
        for c0 in _window_starts(width, window, stride):
            block = skeleton[r0:r0 + window, c0:c0 + window]
            rows, cols = np.nonzero(block)
            if rows.size < 2 * min_inliers:
                continue
            windows_fitted += 1
            points = np.column_stack([cols + c0, rows + r0]).astype(float)
            lines = _fit_lines(points, (seed, r0, c0), inlier_distance,
                               max_trials, min_inliers, max_lines)

            for i in range(len(lines)):
                for j in range(i + 1, len(lines)):
                    a, b = lines[i], lines[j]
                    if a.slope * b.slope >= 0:
                        continue
                    if min(abs(a.slope), abs(b.slope)) < min_slope:
                        continue
                    if _wing_asymmetry(a.slope, b.slope) > slope_tolerance:
                        continue
                    point = _line_crossing(a, b)
                    if point is None:
                        continue
                    col, row = point
                    if not (c0 <= col <= c0 + window - 1 and r0 <= row <= r0 + window - 1):
                        continue
                    if not _is_crossing(pixels, point, (a.direction, b.direction), arm_length):
                        continue
                    left, right = (a, b) if a.slope > 0 else (b, a)
                    candidates.append((row, col, left.slope, right.slope))

    points = []
    if candidates:
        values = np.array(candidates, dtype=float)
        pairs = cKDTree(values[:, :2]).query_pairs(merge_radius, output_type='ndarray')
        clusters = _components(len(candidates), pairs)
        for cluster in np.unique(clusters):
            row, col, left, right = values[clusters == cluster].mean(axis=0)
            points.append(IntersectionPoint(int(round(row)), int(round(col)), float(left), float(right)))
        points.sort(key=lambda p: (p.col, p.row))
    logger.debug(
        f"Intersections: {windows_fitted} windows fitted, {len(candidates)} candidates, "
        f"{len(points)} after merging"
    )
    return points


def erosion_square(config: Optional[RadarConfig], size: int = 30) -> Tuple[int, int]:
    """Rows and columns of the cleared square, scaled to the grid resolution."""
    if config is None:
        return size, size
    rows = max(1, int(round(size * DEFAULT_DT / config.dt)))
    cols = max(1, int(round(size * DEFAULT_DX / config.dx)))
    return rows, cols


@dataclass
class _Segment:
    """Geometry of one connected component used for regrouping."""

    label: int
    cols: np.ndarray
    tops: np.ndarray
    min_row: int
    max_row: int
    has_apex: bool
    left_slope: float
    right_slope: float

    @property
    def left_end(self) -> Tuple[float, float]:
        return float(self.tops[0]), float(self.cols[0])

    @property
    def right_end(self) -> Tuple[float, float]:
        return float(self.tops[-1]), float(self.cols[-1])


def _end_slope(cols: np.ndarray, tops: np.ndarray, span: int) -> float:
    if cols.size < 2:
        return 0.0
    return float(np.polyfit(cols[:span].astype(float), tops[:span].astype(float), 1)[0])


def _describe_segments(labels: np.ndarray, count: int, end_span: int = 8) -> Dict[int, _Segment]:
    segments = {}
    slices = ndimage.find_objects(labels)
    for label in range(1, count + 1):
        box = slices[label - 1]
        if box is None:
            continue
        sub = labels[box] == label
        present = sub.any(axis=0)
        cols = np.flatnonzero(present) + box[1].start
        tops = np.argmax(sub[:, present], axis=0) + box[0].start
        apex = int(np.argmin(tops))
        margin = 2
        has_apex = cols.size > 2 * margin and margin <= apex < cols.size - margin
        segments[label] = _Segment(
            label=label,
            cols=cols,
            tops=tops,
            min_row=box[0].start,
            max_row=box[0].stop - 1,
            has_apex=has_apex,
            left_slope=_end_slope(cols, tops, end_span),
            right_slope=_end_slope(cols[-end_span:], tops[-end_span:], end_span),
        )
    return segments


def _ring_contacts(labels: np.ndarray, r_lo: int, r_hi: int, c_lo: int, c_hi: int) -> Dict[int, Tuple[float, float]]:
    """Mean (row, col) of each label on the one-pixel ring around a square."""
    height, width = labels.shape
    coords = set()
    for c in range(c_lo - 1, c_hi + 1):
        coords.add((r_lo - 1, c))
        coords.add((r_hi, c))
    for r in range(r_lo - 1, r_hi + 1):
        coords.add((r, c_lo - 1))
        coords.add((r, c_hi))
    hits: Dict[int, List[Tuple[int, int]]] = {}
    for r, c in sorted(coords):
        if 0 <= r < height and 0 <= c < width and labels[r, c] > 0:
            hits.setdefault(int(labels[r, c]), []).append((r, c))
    return {
        label: (float(np.mean([p[0] for p in pts])), float(np.mean([p[1] for p in pts])))
        for label, pts in hits.items()
    }


def separate_hyperbolas(mask: BinaryMask, intersections: Sequence[IntersectionPoint],
                        erosion_size: int = 30, join_radius: float = 40.0,
                        overlap_tolerance: int = 3,
                        apex_prominence: float = DEFAULT_APEX_PROMINENCE) -> LabeledHyperbolas:
    """
    Split crossing hyperbolas into one label each.

    A square (erosion_size pixels at the default grid, scaled otherwise) is
    cleared around every intersection and the remaining 8-connected pieces
    are labeled. Pieces leaving a square along the same fitted wing line are
    one hyperbola; other pieces join when their nearest ends are closer than
    join_radius and their layout fits a single hyperbola (a rising piece
    followed by a falling one across an apex, or two pieces continuing the
    same wing). Straight bridge lines along the fitted wings are drawn
    across each square, and every label is finally brought to a single apex
    (see _one_apex_per_label).

    Args:
        mask: Binary mask after gap filling
        intersections: Output of detect_intersections
        erosion_size: Side of the cleared square at the default grid
        join_radius: Maximum end-to-end distance for joining pieces
        overlap_tolerance: Columns two joined pieces may share
        apex_prominence: Rows an apex must stand above its surroundings

    Returns:
        LabeledHyperbolas with labels ordered left to right
    """
    pixels = mask.pixels.copy()
    height, width = pixels.shape
    square_rows, square_cols = erosion_square(mask.config, erosion_size)

    squares = []
    for point in intersections:
        r_lo = max(0, point.row - square_rows // 2)
        r_hi = min(height, point.row - square_rows // 2 + square_rows)
        c_lo = max(0, point.col - square_cols // 2)
        c_hi = min(width, point.col - square_cols // 2 + square_cols)
        pixels[r_lo:r_hi, c_lo:c_hi] = False
        squares.append((point, r_lo, r_hi, c_lo, c_hi))

    labels, count = ndimage.label(pixels, structure=EIGHT_CONNECTED)
    if count == 0:
        return LabeledHyperbolas(np.zeros_like(labels), 0, mask.config)

    edges: List[Tuple[int, int]] = []
    bridges: List[Tuple[int, Tuple[float, float], Tuple[float, float]]] = []
    tolerance = max(square_rows, square_cols) / 2.0

    # Pieces leaving a square along the same fitted wing belong together
    for point, r_lo, r_hi, c_lo, c_hi in squares:
        contacts = _ring_contacts(labels, r_lo, r_hi, c_lo, c_hi)
        directions = [
            np.array([1.0, slope]) / math.hypot(1.0, slope)
            for slope in (point.left_slope, point.right_slope)
        ]
        arms: List[Dict[int, Tuple[float, int, Tuple[float, float]]]] = [{}, {}]
        for label, (row, col) in contacts.items():
            offset = np.array([col - point.col, row - point.row])
            distances = [abs(offset[0] * d[1] - offset[1] * d[0]) for d in directions]
            k = int(np.argmin(distances))
            if distances[k] > tolerance:
                continue
            side = 1 if float(offset @ directions[k]) > 0 else -1
            best = arms[k].get(side)
            if best is None or distances[k] < best[0]:
                arms[k][side] = (distances[k], label, (row, col))
        for sides in arms:
            if 1 in sides and -1 in sides:
                edges.append((sides[1][1], sides[-1][1]))
                bridges.append((sides[1][1], sides[-1][2], sides[1][2]))

    groups = _join_pieces(labels, count, edges, join_radius, overlap_tolerance)
    # compact group ids 1..n for pieces 1..count
    _, compact = np.unique(groups[1:], return_inverse=True)
    lookup = np.concatenate([[0], compact + 1])
    grid = lookup[labels]

    for label, start, end in bridges:
        rr, cc = draw_line(int(round(start[0])), int(round(start[1])),
                           int(round(end[0])), int(round(end[1])))
        inside = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
        rr, cc = rr[inside], cc[inside]
        empty = grid[rr, cc] == 0
        grid[rr[empty], cc[empty]] = lookup[label]

    grid = _one_apex_per_label(grid, apex_prominence)
    grid, n_labels = _relabel_left_to_right(grid)
    logger.debug(
        f"Separation: {len(squares)} squares cleared, {count} pieces, {n_labels} hyperbolas, "
        f"{len(bridges)} bridges"
    )
    return LabeledHyperbolas(grid, n_labels, mask.config)


def _join_pieces(labels: np.ndarray, count: int, edges: Sequence[Tuple[int, int]],
                 join_radius: float, overlap_tolerance: int) -> np.ndarray:
    """
    Greedy regrouping of pieces by end distance and wing layout.

    Returns:
        Group id of every piece label 0..count (index 0 is background)
    """
    segments = _describe_segments(labels, count)
    candidates = []
    for a in segments.values():
        for b in segments.values():
            if a.label == b.label or a.cols[0] > b.cols[0]:
                continue
            if a.cols[-1] > b.cols[0] + overlap_tolerance:
                continue
            (ra, ca), (rb, cb) = a.right_end, b.left_end
            distance = math.hypot(ra - rb, ca - cb)
            if distance >= join_radius:
                continue
            across_apex = a.right_slope < 0 < b.left_slope
            same_wing = (
                a.right_slope * b.left_slope > 0
                and (rb - ra) * a.right_slope >= 0
            )
            if not (across_apex or same_wing):
                continue
            area = (max(a.cols[-1], b.cols[-1]) - min(a.cols[0], b.cols[0]) + 1) * (
                max(a.max_row, b.max_row) - min(a.min_row, b.min_row) + 1
            )
            candidates.append((distance, area, a.label, b.label))

    edges = list(edges)
    groups = _components(count + 1, edges)
    for distance, area, la, lb in sorted(candidates):
        if groups[la] == groups[lb]:
            continue
        members_a = [s for s in segments.values() if groups[s.label] == groups[la]]
        members_b = [s for s in segments.values() if groups[s.label] == groups[lb]]
        apexes = sum(s.has_apex for s in members_a) + sum(s.has_apex for s in members_b)
        if apexes > 1:
            continue
        cols_a = np.unique(np.concatenate([s.cols for s in members_a]))
        cols_b = np.unique(np.concatenate([s.cols for s in members_b]))
        if np.intersect1d(cols_a, cols_b).size > overlap_tolerance:
            continue
        edges.append((la, lb))
        groups = _components(count + 1, edges)
        logger.debug(f"Joined pieces {la} and {lb} (end distance {distance:.1f})")
    return groups


def _top_profile(grid: np.ndarray, label: int) -> Tuple[np.ndarray, np.ndarray]:
    """Columns spanned by a label and its topmost row in each, gaps interpolated."""
    present = grid == label
    occupied = present.any(axis=0)
    cols = np.flatnonzero(occupied)
    tops = np.argmax(present[:, occupied], axis=0).astype(float)
    span = np.arange(cols[0], cols[-1] + 1)
    return span, np.interp(span, cols, tops)


def _one_apex_per_label(grid: np.ndarray, apex_prominence: float) -> np.ndarray:
    """
    Split labels holding several apexes and fold apex-less pieces back in.

    An apex is a minimum of the label's top-row profile standing at least
    apex_prominence rows above its surroundings. A label with several apexes
    is cut at the deepest profile column between each pair of neighbours.
    A label without an apex is first cut at its prominent profile maxima
    (where two wings meet), and every resulting piece that descends away
    from some apex is merged into the nearest such labeled hyperbola: pieces
    right of the apex must descend to the right, pieces left of it to the
    left. Pieces with no such hyperbola keep their own label.
    """
    grid = grid.copy()
    next_label = int(grid.max()) + 1
    apexes: Dict[int, int] = {}
    apexless: List[int] = []

    for label in range(1, next_label):
        if not (grid == label).any():
            continue
        span, profile = _top_profile(grid, label)
        minima = find_peaks(-profile, prominence=apex_prominence)[0]
        if minima.size == 1:
            apexes[label] = int(span[minima[0]])
            continue
        if minima.size > 1:
            cuts = [int(span[a + np.argmax(profile[a:b + 1])]) for a, b in zip(minima[:-1], minima[1:])]
        else:
            cuts = [int(span[m]) for m in find_peaks(profile, prominence=apex_prominence)[0]]

        rows, cols = np.nonzero(grid == label)
        new_ids = [label] + list(range(next_label, next_label + len(cuts)))
        next_label += len(cuts)
        grid[rows, cols] = np.array(new_ids)[np.searchsorted(cuts, cols, side='left')]
        if minima.size > 1:
            apexes.update({new_id: int(span[m]) for new_id, m in zip(new_ids, minima)})
            logger.debug(f"Label {label} held {minima.size} apexes; cut at columns {cuts}")
        else:
            apexless.extend(new_ids)

    if not apexes:
        return grid

    anchors = {
        label: (apex_col, cKDTree(np.argwhere(grid == label)))
        for label, apex_col in apexes.items()
    }
    for label in apexless:
        piece = np.argwhere(grid == label)
        if len(piece) == 0:
            continue
        span, profile = _top_profile(grid, label)
        trend = float(np.polyfit(span, profile, 1)[0]) if span.size > 1 else 0.0
        best = None
        for anchor, (apex_col, tree) in anchors.items():
            right_wing = span[0] > apex_col and trend > 0
            left_wing = span[-1] < apex_col and trend < 0
            if not (right_wing or left_wing):
                continue
            distance = float(tree.query(piece)[0].min())
            if best is None or distance < best[0]:
                best = (distance, anchor)
        if best is not None:
            grid[grid == label] = best[1]
            logger.debug(f"Apex-less piece {label} merged into label {best[1]} ({best[0]:.1f} px away)")
    return grid


def _relabel_left_to_right(grid: np.ndarray) -> Tuple[np.ndarray, int]:
    """Renumber labels 1..n by leftmost column, then topmost row."""
    present = np.unique(grid[grid > 0])
    if present.size == 0:
        return np.zeros_like(grid), 0
    boxes = ndimage.find_objects(grid)
    order = sorted(present, key=lambda label: (boxes[label - 1][1].start, boxes[label - 1][0].start))
    lookup = np.zeros(int(grid.max()) + 1, dtype=int)
    for i, label in enumerate(order):
        lookup[label] = i + 1
    return lookup[grid], len(order)


def _crest_rows(column: np.ndarray, top: int) -> float:
    """Midpoint of the vertical run starting at top."""
    below = column[top:]
    gap = np.flatnonzero(~below)
    length = int(gap[0]) if gap.size else int(below.size)
    return top + (length - 1) / 2.0


def _lobe_centroid(column: np.ndarray, peak: int, half: int) -> float:
    """Intensity-weighted mean row of the lobe around an integer peak."""
    lo = max(0, peak - half)
    weights = column[lo:peak + half + 1]
    weights = weights - weights.min()
    if weights.sum() <= 0:
        return float(peak)
    return float(lo + np.dot(np.arange(weights.size), weights) / weights.sum())


def _peak_rows(raw: np.ndarray, smoothed: np.ndarray, cols: np.ndarray, tops: np.ndarray,
               lobe: int) -> np.ndarray:
    """First-arrival peak below each leading-edge pixel."""
    rows = np.empty(cols.size)
    for i, (col, top) in enumerate(zip(cols, tops)):
        window = smoothed[top:top + 2 * lobe + 1, col]
        peak = int(top + np.argmax(window))
        rows[i] = _lobe_centroid(raw[:, col], peak, lobe // 2)
    return rows


def _trace_wing(raw: np.ndarray, smoothed: np.ndarray, grid: np.ndarray, label: int,
                cols: np.ndarray, rows: np.ndarray, step: int, lobe: int,
                floor: float, gain, fit_span: int = 8) -> List[Tuple[int, float]]:
    """
    Follow one wing of the ridge outward from the end of an outline.

    step is -1 for the left wing and +1 for the right wing; cols and rows
    are ordered so that the last entry is the wing end. Tracing stops at the
    record edge, at another label, where the ridge leaves the search window
    or where its gain-compensated intensity falls below floor.
    """
    height, width = smoothed.shape
    track_cols = [float(c) for c in cols[-fit_span:]]
    track_rows = [float(r) for r in rows[-fit_span:]]
    col = int(cols[-1])
    row = float(rows[-1])
    traced = []
    while True:
        col += step
        if not 0 <= col < width:
            break
        slope = np.polyfit(track_cols, track_rows, 1)[0] if len(track_cols) > 1 else 0.0
        predicted = int(round(row + max(slope * step, 0.0)))
        lo = predicted - TRACE_SEARCH_ROWS
        hi = predicted + TRACE_SEARCH_ROWS + 1
        if lo < 0 or hi > height:
            break
        k = int(np.argmax(smoothed[lo:hi, col]))
        if k == 0 or k == hi - lo - 1:
            break
        peak = lo + k
        if peak < int(round(row)):
            break
        nearby = grid[max(0, lo - lobe):hi + lobe, col]
        if np.any((nearby > 0) & (nearby != label)):
            break
        if gain(peak, col) < floor:
            break
        row = _lobe_centroid(raw[:, col], peak, lobe // 2)
        traced.append((col, row))
        track_cols = (track_cols + [float(col)])[-fit_span:]
        track_rows = (track_rows + [row])[-fit_span:]
    return traced


def extract_outlines(labeled: LabeledHyperbolas, min_outline_points: int = 15,
                     mode: str = 'peak', dropped: Optional[List[DroppedOutline]] = None,
                     intensities: Optional[np.ndarray] = None,
                     trace_ratio: float = DEFAULT_TRACE_RATIO) -> List[HyperbolaOutline]:
    """
    Reduce each label to one outline point per column.

    In "edge" mode the point is the topmost pixel of the label in that
    column (the leading edge); in "crest" mode it is the midpoint of the
    topmost vertical run. In "peak" mode the point is the intensity peak of
    the first arrival just below the leading edge, refined to sub-row
    precision, and both wings are then traced further outward along the
    intensity ridge while its gain-compensated strength stays above
    trace_ratio times the median along the labeled part. Labels spanning
    fewer than min_outline_points columns are dropped, logged and appended
    to dropped when given.

    Args:
        labeled: Output of separate_hyperbolas
        min_outline_points: Minimum labeled columns for an outline
        mode: "peak", "edge" or "crest"
        dropped: Optional list collecting DroppedOutline records
        intensities: Raw scan intensities (required in "peak" mode)
        trace_ratio: Relative ridge strength at which wing tracing stops

    Returns:
        Outlines in label order
    """
    if mode not in OUTLINE_MODES:
        raise ExtractionError(f"Unknown outline mode {mode!r}; expected one of {OUTLINE_MODES}")

    if mode == 'peak':
        if intensities is None:
            raise ExtractionError("Outline mode 'peak' needs the scan intensities")
        raw = np.asarray(intensities, dtype=float)
        if raw.shape != labeled.grid.shape:
            raise InvalidMask(f"Intensities {raw.shape} do not match labels {labeled.grid.shape}")
        smoothed = ndimage.gaussian_filter1d(raw, sigma=1.0, axis=0)
        radar = labeled.config or RadarConfig()
        lobe = radar.main_lobe_rows
        background = float(np.median(smoothed))

        def gain(row: int, col: int) -> float:
            # amplitude falls off as 1/t; (row - time zero) is proportional to t
            return (smoothed[row, col] - background) * max(row - radar.time_zero_row, 1)

    outlines = []
    boxes = ndimage.find_objects(labeled.grid)
    for label in range(1, labeled.count + 1):
        box = boxes[label - 1] if label - 1 < len(boxes) else None
        if box is None:
            continue
        sub = labeled.grid[box] == label
        present = sub.any(axis=0)
        local_cols = np.flatnonzero(present)
        tops = np.argmax(sub[:, present], axis=0)

        if local_cols.size < min_outline_points:
            record = DroppedOutline(label, int(local_cols.size),
                                    f"fewer than {min_outline_points} columns")
            logger.warning(f"Dropped label {label}: {record.n_points} columns < {min_outline_points}")
            if dropped is not None:
                dropped.append(record)
            continue

        cols = local_cols + box[1].start
        if mode == 'crest':
            rows = np.array([_crest_rows(sub[:, c], t) for c, t in zip(local_cols, tops)]) + box[0].start
        elif mode == 'edge':
            rows = tops + float(box[0].start)
        else:
            rows = _peak_rows(raw, smoothed, cols, tops + box[0].start, lobe)
            floor = trace_ratio * float(np.median([gain(int(round(r)), c) for r, c in zip(rows, cols)]))
            left = _trace_wing(raw, smoothed, labeled.grid, label, cols[::-1], rows[::-1], -1,
                               lobe, floor, gain)
            right = _trace_wing(raw, smoothed, labeled.grid, label, cols, rows, 1,
                                lobe, floor, gain)
            if left or right:
                logger.debug(f"Label {label}: traced {len(left)} + {len(right)} wing columns")
            cols = np.concatenate([[c for c, _ in left[::-1]], cols, [c for c, _ in right]]).astype(int)
            rows = np.concatenate([[r for _, r in left[::-1]], rows, [r for _, r in right]])

        outlines.append(HyperbolaOutline(label, rows, cols))

    logger.debug(f"Extracted {len(outlines)} outlines from {labeled.count} labels")
    return outlines
