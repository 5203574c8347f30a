"""
File formats: B-scans (JSON metadata + CSV grid), hyperbola databases,
outlines, estimates and evaluation reports.

Result values are written with 9 significant digits; grid calibration
fields are written at full precision so a reloaded database still validates
against the scans it was built for.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core import BScan, GprBarError, RadarConfig, RebarPlacement, rebar_size
from extract import DroppedOutline, HyperbolaOutline
from logger import get_logger
from match import Candidate, RebarEstimate
from simulate import SceneSpec
from theory import DatabaseEntry, HyperbolaDatabase
from utils import generate_content_hash, round_floats

logger = get_logger(__name__)

FLOAT_FORMAT = "%.9g"


class StorageError(GprBarError):
    """Exception raised for unreadable, unwritable or inconsistent files."""
    pass


class ResultEncoder(json.JSONEncoder):
    """JSON encoder for numpy scalars/arrays and objects with to_dict()."""

    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        elif isinstance(obj, np.floating):
            return float(obj)
        elif isinstance(obj, np.bool_):
            return bool(obj)
        elif isinstance(obj, np.ndarray):
            return obj.tolist()
        elif hasattr(obj, 'to_dict'):
            return obj.to_dict()
        return super().default(obj)


def _plain(obj):
    """Convert numpy values nested in dicts/lists to built-in Python types."""
    if isinstance(obj, dict):
        return {key: _plain(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(data: Dict[str, Any], path, round_values: bool = True) -> Path:
    """
    Write a JSON document with indent=2 and a trailing newline.

    Raises:
        StorageError: If the file cannot be written
    """
    path = Path(path)
    payload = _plain(data)
    if round_values:
        payload = round_floats(payload)
    text = json.dumps(payload, indent=2, ensure_ascii=False, cls=ResultEncoder) + "\n"
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
    except OSError as e:
        logger.error(f"IO error writing {path}: {e}")
        raise StorageError(f"Cannot write {path}: {e}") from e
    logger.debug(f"Wrote {path} (sha256 {generate_content_hash(text.encode('utf-8'))[:12]})")
    return path


def read_json(path) -> Dict[str, Any]:
    """
    Read a JSON object.

    Raises:
        StorageError: If the file is missing, malformed or not an object
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise StorageError(f"Cannot read {path}: {e}") from e
    if not isinstance(data, dict):
        raise StorageError(f"{path} must hold a JSON object")
    return data


def scan_paths(path) -> Tuple[Path, Path]:
    """BASE.json and BASE.csv for a base path or either of the two files."""
    path = Path(path)
    base = path.with_suffix('') if path.suffix.lower() in ('.csv', '.json') else path
    return base.with_name(base.name + '.json'), base.with_name(base.name + '.csv')


# B-scans

def write_scan(scan: BScan, base, placements: Sequence[RebarPlacement] = (),
               scene: Optional[SceneSpec] = None) -> Tuple[Path, Path]:
    """
    Write a scan as BASE.json (calibration) and BASE.csv (row-major grid).

    Ground-truth placements, when given, are stored in the metadata. A
    synthetic scan passes its scene instead, whose noise level, seed and
    direct-wave extent are stored too so `simulate --scene BASE.json`
    reproduces the grid.

    Returns:
        Tuple of (metadata path, grid path)
    """
    meta_path, grid_path = scan_paths(base)
    if scene is not None:
        if scene.config != scan.config:
            raise StorageError("Scene calibration does not match the scan")
        metadata = scene.to_dict()
    else:
        metadata = scan.config.to_dict()
        if placements:
            metadata['placements'] = [p.to_dict() for p in placements]
    write_json(metadata, meta_path, round_values=False)

    try:
        pd.DataFrame(scan.intensities).to_csv(
            grid_path, header=False, index=False,
            float_format=FLOAT_FORMAT, lineterminator='\n',
        )
    except OSError as e:
        logger.error(f"IO error writing {grid_path}: {e}")
        raise StorageError(f"Cannot write {grid_path}: {e}") from e

    logger.info(f"Stored {scan.shape[0]}x{scan.shape[1]} scan to {grid_path}")
    return meta_path, grid_path


def read_scan_metadata(path) -> Dict[str, Any]:
    meta_path, _ = scan_paths(path)
    return read_json(meta_path)


def read_scan(path) -> BScan:
    """
    Read a scan written by write_scan or produced externally.

    Grids with values outside [0, 1] are min-max normalized.

    Raises:
        StorageError: On missing files or a grid that disagrees with the metadata
    """
    meta_path, grid_path = scan_paths(path)
    metadata = read_json(meta_path)
    try:
        config = RadarConfig.from_dict(metadata)
    except (KeyError, ValueError, TypeError) as e:
        raise StorageError(f"Invalid scan metadata in {meta_path}: {e}") from e

    try:
        grid = pd.read_csv(grid_path, header=None, dtype=float).to_numpy()
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {grid_path}") from e
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StorageError(f"Cannot read {grid_path}: {e}") from e

    if grid.shape != config.shape:
        raise StorageError(f"Grid {grid.shape} in {grid_path} does not match metadata {config.shape}")
    if not np.all(np.isfinite(grid)):
        raise StorageError(f"Grid {grid_path} contains non-finite values")
    if grid.min() < 0.0 or grid.max() > 1.0:
        logger.info(f"Normalizing {grid_path}: values span [{grid.min()}, {grid.max()}]")
        return BScan.from_raw(grid, config)
    return BScan(grid, config)


def read_placements(path) -> List[RebarPlacement]:
    """Ground-truth placements stored next to a scan (empty when absent)."""
    metadata = read_scan_metadata(path)
    return [RebarPlacement.from_dict(p) for p in metadata.get('placements', [])]


# Hyperbola database

def database_to_dict(db: HyperbolaDatabase) -> Dict[str, Any]:
    return {
        'velocity_m_per_s': db.velocity,
        'dt_ns': db.dt * 1e9,
        'dx_m': db.dx,
        'time_zero_row': db.time_zero_row,
        'entries': [
            {
                'depth': entry.depth,
                'size': entry.size.designation,
                'diameter': entry.size.diameter,
                'curve': round_floats(entry.curve.tolist()),
            }
            for entry in db
        ],
    }


def write_database(db: HyperbolaDatabase, path) -> Path:
    path = write_json(database_to_dict(db), path, round_values=False)
    logger.info(f"Stored {len(db)}-entry database to {path}")
    return path


def read_database(path) -> HyperbolaDatabase:
    """
    Read a database file.

    Raises:
        StorageError: On missing fields, unknown sizes or invalid curves
    """
    data = read_json(path)
    try:
        entries = tuple(
            DatabaseEntry(float(item['depth']), rebar_size(item['size']), np.asarray(item['curve'], dtype=float))
            for item in data['entries']
        )
        return HyperbolaDatabase(
            entries=entries,
            velocity=float(data['velocity_m_per_s']),
            dt=float(data['dt_ns']) * 1e-9,
            dx=float(data['dx_m']),
            time_zero_row=int(data['time_zero_row']),
        )
    except (KeyError, TypeError, ValueError, GprBarError) as e:
        raise StorageError(f"Invalid database file {path}: {e}") from e


# Outlines

def write_outlines(outlines: Sequence[HyperbolaOutline], path,
                   config: Optional[RadarConfig] = None,
                   dropped: Sequence[DroppedOutline] = ()) -> Path:
    data = {
        'scan': config.to_dict() if config is not None else None,
        'outlines': [
            {
                'label': outline.label,
                'apex_row': round_floats(outline.apex_row),
                'apex_col': outline.apex_col,
                'apex_center': outline.apex_center,
                'rows': round_floats(outline.rows.tolist()),
                'cols': outline.cols,
            }
            for outline in outlines
        ],
        'dropped': [
            {'label': d.label, 'n_points': d.n_points, 'reason': d.reason} for d in dropped
        ],
    }
    # calibration stays at full precision
    path = write_json(data, path, round_values=False)
    logger.info(f"Stored {len(outlines)} outlines to {path}")
    return path


def read_outlines(path) -> Tuple[List[HyperbolaOutline], Optional[RadarConfig], List[DroppedOutline]]:
    """
    Read an outlines file.

    Returns:
        Tuple of (outlines, scan calibration or None, dropped records)
    """
    data = read_json(path)
    try:
        outlines = [
            HyperbolaOutline(int(item['label']), np.asarray(item['rows'], dtype=float),
                             np.asarray(item['cols'], dtype=int))
            for item in data['outlines']
        ]
        config = RadarConfig.from_dict(data['scan']) if data.get('scan') else None
        dropped = [
            DroppedOutline(int(item['label']), int(item['n_points']), str(item['reason']))
            for item in data.get('dropped', [])
        ]
    except (KeyError, TypeError, ValueError, GprBarError) as e:
        raise StorageError(f"Invalid outlines file {path}: {e}") from e
    return outlines, config, dropped


# Estimates

def write_estimates(estimates: Sequence[Tuple[int, RebarEstimate]], path) -> Path:
    """Write (outline label, estimate) pairs."""
    data = {
        'estimates': [dict({'label': label}, **estimate.to_dict()) for label, estimate in estimates]
    }
    path = write_json(data, path)
    logger.info(f"Stored {len(estimates)} estimates to {path}")
    return path


def read_estimates(path) -> List[Tuple[int, RebarEstimate]]:
    data = read_json(path)
    results = []
    try:
        for item in data['estimates']:
            runner = item.get('runner_up')
            runner_up = None
            if runner:
                runner_up = Candidate(float(runner['depth']), rebar_size(runner['size']), float(runner['score']))
            estimate = RebarEstimate(
                depth=float(item['depth']),
                size=rebar_size(item['size']),
                score=float(item['score']),
                apex_col=float(item['apex_col']),
                runner_up=runner_up,
            )
            results.append((int(item['label']), estimate))
    except (KeyError, TypeError, ValueError) as e:
        raise StorageError(f"Invalid estimates file {path}: {e}") from e
    return results


# Evaluation reports

def write_report(report, path) -> Path:
    """Write an EvaluationReport (or anything with to_dict)."""
    data = report.to_dict() if hasattr(report, "to_dict") else report
    path = write_json(data, path)
    logger.info(f"Stored evaluation report to {path}")
    return path
