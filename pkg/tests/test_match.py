"""Tests for outline-to-database matching."""

import numpy as np
import pytest

from core import REBAR_CATALOG, rebar_size
from extract import HyperbolaOutline
from match import (
    InsufficientOutline,
    MatchError,
    estimate_all,
    estimate_rebar,
    mean_distance,
    rank_entries,
)
from theory import DatabaseEntry, HyperbolaDatabase, build_database


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _brute_force(outline, entry, apex_col):
    cols, rows = entry.placed(apex_col)
    vertices = np.column_stack([cols, rows])
    total = 0.0
    for row, col in zip(outline.rows, outline.cols):
        p = np.array([float(col), row])
        total += min(_segment_distance(p, vertices[i], vertices[i + 1]) for i in range(len(vertices) - 1))
    return total / len(outline)


def _outline_on(entry, apex_col, n_cols, label=1):
    cols, rows = entry.placed(apex_col)
    keep = (cols >= 0) & (cols < n_cols)
    return HyperbolaOutline(label, rows[keep], cols[keep].astype(int))


@pytest.fixture
def small_db(narrow_radar):
    return build_database([0.06, 0.08, 0.10], REBAR_CATALOG[:4], narrow_radar)


def test_euclidean_distance_matches_brute_force(narrow_radar):
    rng = np.random.default_rng(21)
    db = build_database([0.06, 0.10, 0.14], REBAR_CATALOG, narrow_radar)
    entries = list(db)
    for _ in range(100):
        entry = entries[int(rng.integers(len(entries)))]
        n = int(rng.integers(15, 40))
        cols = np.sort(rng.choice(61, size=n, replace=False))
        rows = rng.uniform(40.0, 140.0, n)
        outline = HyperbolaOutline(1, rows, cols)
        apex_col = outline.apex_col
        got = mean_distance(outline, entry, apex_col)
        assert got == pytest.approx(_brute_force(outline, entry, apex_col), abs=1e-9)


def test_euclidean_never_exceeds_vertical(narrow_radar):
    rng = np.random.default_rng(3)
    entry = build_database([0.08], [rebar_size('#6')], narrow_radar).entries[0]
    for _ in range(50):
        cols = np.arange(10, 50)
        rows = rng.uniform(40.0, 120.0, cols.size)
        outline = HyperbolaOutline(1, rows, cols)
        euclidean = mean_distance(outline, entry, 30)
        vertical = mean_distance(outline, entry, 30, mode='vertical')
        assert euclidean <= vertical + 1e-12


def test_outline_on_curve_scores_zero(small_db):
    entry = small_db.lookup(0.08, '#5')
    outline = _outline_on(entry, 30, 61)
    assert mean_distance(outline, entry, 30) == pytest.approx(0.0, abs=1e-9)
    assert mean_distance(outline, entry, 30, mode='vertical') == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("mode", ['euclidean', 'vertical'])
def test_exact_curve_wins(small_db, mode):
    for depth, designation in [(0.06, '#3'), (0.08, '#5'), (0.10, '#6')]:
        outline = _outline_on(small_db.lookup(depth, designation), 30, 61)
        estimate = estimate_rebar(outline, small_db, mode=mode)
        assert estimate.depth == depth
        assert estimate.size.designation == designation
        assert estimate.apex_col == 30
        assert estimate.score == pytest.approx(0.0, abs=1e-9)
        assert estimate.runner_up.score > estimate.score


def test_ties_prefer_smaller_depth_then_diameter():
    curve = np.array([5.0, 3.0, 2.0, 3.0, 5.0])
    entries = (
        DatabaseEntry(0.10, rebar_size('#4'), curve),
        DatabaseEntry(0.08, rebar_size('#5'), curve),
        DatabaseEntry(0.08, rebar_size('#3'), curve),
    )
    db = HyperbolaDatabase(entries, velocity=1.2e8, dt=2e-11, dx=0.005, time_zero_row=0)
    outline = HyperbolaOutline(1, np.full(15, 4.0), np.arange(15))
    ranked = rank_entries(outline, db)
    assert [(c.depth, c.size.designation) for c in ranked] == [
        (0.08, '#3'), (0.08, '#5'), (0.10, '#4'),
    ]
    estimate = estimate_rebar(outline, db)
    assert (estimate.depth, estimate.size.designation) == (0.08, '#3')
    assert (estimate.runner_up.depth, estimate.runner_up.size.designation) == (0.08, '#5')


def test_rank_entries_is_sorted(small_db):
    outline = _outline_on(small_db.lookup(0.10, '#4'), 25, 61)
    ranked = rank_entries(outline, small_db)
    assert len(ranked) == len(small_db)
    scores = [c.score for c in ranked]
    assert scores == sorted(scores)


def test_short_outline_is_rejected(small_db):
    outline = HyperbolaOutline(1, np.arange(10, dtype=float), np.arange(10))
    with pytest.raises(InsufficientOutline):
        estimate_rebar(outline, small_db)
    # a lower minimum accepts it
    assert estimate_rebar(outline, small_db, min_points=5).apex_col == 0


def test_unknown_distance_mode(small_db):
    outline = _outline_on(small_db.lookup(0.06, '#3'), 30, 61)
    with pytest.raises(MatchError):
        estimate_rebar(outline, small_db, mode='manhattan')


def test_single_entry_database_has_no_runner_up(narrow_radar):
    db = build_database([0.08], [rebar_size('#7')], narrow_radar)
    outline = _outline_on(db.entries[0], 30, 61)
    estimate = estimate_rebar(outline, db)
    assert estimate.runner_up is None
    assert estimate.to_dict()['runner_up'] is None


def test_estimate_all_skips_short_outlines(small_db):
    good = _outline_on(small_db.lookup(0.08, '#4'), 30, 61, label=1)
    short = HyperbolaOutline(2, np.arange(5, dtype=float), np.arange(5))
    results = estimate_all([good, short], small_db)
    assert len(results) == 1
    outline, estimate = results[0]
    assert outline.label == 1
    assert (estimate.depth, estimate.size.designation) == (0.08, '#4')


def test_estimate_to_dict(small_db):
    outline = _outline_on(small_db.lookup(0.10, '#6'), 30, 61)
    data = estimate_rebar(outline, small_db).to_dict()
    assert data['size'] == '#6'
    assert data['depth'] == 0.10
    assert data['diameter'] == rebar_size('#6').diameter
    assert set(data['runner_up']) == {'depth', 'size', 'score'}
