"""Shared fixtures and drawing helpers for the test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config import reload_config  # noqa: E402
from core import BScan, RadarConfig  # noqa: E402


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    """Every test starts from the default configuration."""
    monkeypatch.delenv("GPRBAR_CONFIG", raising=False)
    reload_config()
    yield
    reload_config()


@pytest.fixture
def radar():
    return RadarConfig()


@pytest.fixture
def narrow_radar():
    # 61 traces -> database curves of 61 columns
    return RadarConfig(n_traces=61)


def grid_scan(grid) -> BScan:
    """Wrap an arbitrary [0, 1] grid in a scan with a matching calibration."""
    grid = np.asarray(grid, dtype=float)
    config = RadarConfig(n_samples=grid.shape[0], n_traces=grid.shape[1], time_zero_row=0)
    return BScan(grid, config)


def draw_curve(shape, cols, rows) -> np.ndarray:
    """
    Boolean mask with one pixel per (row, col) and the vertical span between
    adjacent columns filled so the curve stays 8-connected.
    """
    mask = np.zeros(shape, dtype=bool)
    cols = np.asarray(cols, dtype=int)
    rows = np.rint(np.asarray(rows, dtype=float)).astype(int)
    for i, (r, c) in enumerate(zip(rows, cols)):
        if 0 <= r < shape[0] and 0 <= c < shape[1]:
            mask[r, c] = True
        if i + 1 < len(cols) and cols[i + 1] == c + 1:
            nxt = rows[i + 1]
            lo, hi = sorted((r, nxt))
            for rr in range(lo + 1, hi):
                if 0 <= rr < shape[0] and 0 <= c < shape[1]:
                    mask[rr, c] = True
    return mask


def apex_up(shape, apex_row: int, apex_col: int, slope: float = 1.0) -> np.ndarray:
    """Inverted-V pair of straight wings meeting at (apex_row, apex_col)."""
    cols = np.arange(shape[1])
    rows = apex_row + slope * np.abs(cols - apex_col)
    return draw_curve(shape, cols, rows)
