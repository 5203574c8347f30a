"""
Nearest-database-entry estimation of rebar depth and size.

Every database curve is placed with its apex on the outline's apex, located
to a fraction of a column from the symmetry of the wings, and scored by the
mean distance from the outline points to the curve; the lowest score wins.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import shapely

from core import GprBarError, RebarSize
from extract import HyperbolaOutline
from logger import get_logger
from theory import DatabaseEntry, HyperbolaDatabase

logger = get_logger(__name__)

DISTANCE_MODES = ('euclidean', 'vertical')
DEFAULT_MIN_OUTLINE_POINTS = 15


class MatchError(GprBarError):
    """Base exception for outline matching."""
    pass


class InsufficientOutline(MatchError):
    """Exception raised when an outline has too few points to score."""
    pass


class EmptyDatabase(MatchError):
    """Exception raised when matching against a database with no entries."""
    pass


@dataclass(frozen=True)
class Candidate:
    """One scored database entry."""

    depth: float
    size: RebarSize
    score: float


@dataclass(frozen=True)
class RebarEstimate:
    """Best database match for one outline."""

    depth: float
    size: RebarSize
    score: float
    apex_col: float
    runner_up: Optional[Candidate] = None

    def to_dict(self) -> dict:
        data = {
            'depth': self.depth,
            'size': self.size.designation,
            'diameter': self.size.diameter,
            'score': self.score,
            'apex_col': self.apex_col,
            'runner_up': None,
        }
        if self.runner_up is not None:
            data['runner_up'] = {
                'depth': self.runner_up.depth,
                'size': self.runner_up.size.designation,
                'score': self.runner_up.score,
            }
        return data


def mean_distance(outline: HyperbolaOutline, entry: DatabaseEntry, apex_col: float,
                  mode: str = 'euclidean',
                  min_points: int = DEFAULT_MIN_OUTLINE_POINTS) -> float:
    """
    Mean distance from the outline points to a placed database curve.

    Args:
        outline: Extracted outline
        entry: Database entry whose curve is placed with its apex at apex_col
        apex_col: Column of the curve apex
        mode: "euclidean" (point to polyline) or "vertical" (per column)
        min_points: Minimum outline length

    Returns:
        Mean distance in pixels

    Raises:
        InsufficientOutline: If the outline has fewer than min_points points
    """
    if len(outline) < min_points:
        raise InsufficientOutline(f"Outline has {len(outline)} points, need {min_points}")
    if mode not in DISTANCE_MODES:
        raise MatchError(f"Unknown distance mode {mode!r}; expected one of {DISTANCE_MODES}")

    curve_cols, curve_rows = entry.placed(apex_col)
    if mode == 'vertical':
        expected = np.interp(outline.cols.astype(float), curve_cols, curve_rows)
        return float(np.mean(np.abs(outline.rows - expected)))

    polyline = shapely.LineString(np.column_stack([curve_cols, curve_rows]))
    points = shapely.points(np.column_stack([outline.cols.astype(float), outline.rows]))
    return float(np.mean(shapely.distance(points, polyline)))


def rank_entries(outline: HyperbolaOutline, db: HyperbolaDatabase, mode: str = 'euclidean',
                 min_points: int = DEFAULT_MIN_OUTLINE_POINTS) -> List[Candidate]:
    """
    Score every entry; best first.

    Ties are broken by smaller depth, then smaller diameter.
    """
    if len(db) == 0:
        raise EmptyDatabase("Hyperbola database is empty")
    apex_col = outline.apex_center
    scored = [
        Candidate(entry.depth, entry.size, mean_distance(outline, entry, apex_col, mode, min_points))
        for entry in db
    ]
    return sorted(scored, key=lambda c: (c.score, c.depth, c.size.diameter))


def estimate_rebar(outline: HyperbolaOutline, db: HyperbolaDatabase, mode: str = 'euclidean',
                   min_points: int = DEFAULT_MIN_OUTLINE_POINTS) -> RebarEstimate:
    """
    Exhaustive nearest-entry search.

    Args:
        outline: Extracted outline
        db: Theoretical hyperbola database
        mode: Distance mode passed to mean_distance
        min_points: Minimum outline length

    Returns:
        RebarEstimate with the winning entry and the runner-up
    """
    ranked = rank_entries(outline, db, mode, min_points)
    best = ranked[0]
    runner_up = ranked[1] if len(ranked) > 1 else None
    apex_col = outline.apex_center
    logger.debug(
        f"Outline {outline.label} at col {apex_col:.2f}: {best.size.designation} "
        f"@ {best.depth:.3f} m (score {best.score:.3f})"
    )
    return RebarEstimate(best.depth, best.size, best.score, apex_col, runner_up)


def estimate_all(outlines: List[HyperbolaOutline], db: HyperbolaDatabase,
                 mode: str = 'euclidean',
                 min_points: int = DEFAULT_MIN_OUTLINE_POINTS) -> List[Tuple[HyperbolaOutline, RebarEstimate]]:
    """Estimate every outline, skipping (and logging) ones that are too short."""
    results = []
    for outline in outlines:
        try:
            results.append((outline, estimate_rebar(outline, db, mode, min_points)))
        except InsufficientOutline as e:
            logger.warning(f"Skipping outline {outline.label}: {e}")
    return results
