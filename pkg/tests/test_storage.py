"""Tests for scan, database, outline, estimate and report files."""

import json

import numpy as np
import pytest

from core import REBAR_CATALOG, BScan, RadarConfig, RebarPlacement, rebar_size
from evaluate import BarFailure, CaseOutcome, summarize
from extract import DroppedOutline, HyperbolaOutline
from match import Candidate, RebarEstimate
from storage import (
    StorageError,
    read_database,
    read_estimates,
    read_json,
    read_outlines,
    read_placements,
    read_scan_metadata,
    read_scan,
    scan_paths,
    write_database,
    write_estimates,
    write_json,
    write_outlines,
    write_report,
    write_scan,
)
from simulate import SceneSpec, SimulationError, figure_scene, synthesize_bscan
from theory import build_database


@pytest.fixture
def small_scan():
    config = RadarConfig(n_samples=6, n_traces=4, time_zero_row=1)
    grid = np.linspace(0.0, 1.0, 24).reshape(6, 4)
    return BScan(grid, config)


def test_scan_paths():
    meta, grid = scan_paths('out/scan')
    assert (meta.name, grid.name) == ('scan.json', 'scan.csv')
    assert scan_paths('out/scan.csv') == scan_paths('out/scan.json') == (meta, grid)


def test_scan_round_trip(tmp_path, small_scan):
    bar = RebarPlacement(0.01, 0.08, rebar_size('#5'))
    write_scan(small_scan, tmp_path / 'scan', placements=[bar])
    restored = read_scan(tmp_path / 'scan')
    np.testing.assert_allclose(restored.intensities, small_scan.intensities, rtol=1e-8, atol=1e-12)
    assert restored.config.same_grid(small_scan.config)
    assert read_placements(tmp_path / 'scan.json') == [bar]


def test_scan_without_placements(tmp_path, small_scan):
    write_scan(small_scan, tmp_path / 'scan')
    assert read_placements(tmp_path / 'scan') == []


def test_scene_metadata_replays_the_scan(tmp_path):
    radar = RadarConfig(n_samples=128, n_traces=80)
    bar = RebarPlacement(0.2, 0.03, rebar_size('#6'))
    spec = SceneSpec(config=radar, placements=(bar,), noise_sigma=0.01, seed=5)
    scan, _ = synthesize_bscan(spec)
    write_scan(scan, tmp_path / 'scan', scene=spec)

    metadata = read_scan_metadata(tmp_path / 'scan')
    assert (metadata['noise_sigma'], metadata['seed']) == (0.01, 5)
    assert metadata['direct_wave_rows'] == spec.direct_wave_rows
    assert read_placements(tmp_path / 'scan') == [bar]

    replayed, _ = synthesize_bscan(SceneSpec.from_dict(metadata))
    np.testing.assert_allclose(replayed.intensities, scan.intensities, atol=1e-9)
    # plain scan metadata is an empty scene on the same grid
    plain = SceneSpec.from_dict(radar.to_dict())
    assert plain.placements == () and plain.config.same_grid(radar)


def test_scene_must_match_scan_calibration(tmp_path, small_scan):
    with pytest.raises(StorageError):
        write_scan(small_scan, tmp_path / 'scan', scene=figure_scene())


def test_malformed_scene_is_rejected():
    with pytest.raises(SimulationError):
        SceneSpec.from_dict({'placements': []})


def test_read_scan_normalizes_out_of_range_grid(tmp_path, small_scan):
    write_scan(small_scan, tmp_path / 'scan')
    (tmp_path / 'scan.csv').write_text(
        "\n".join(",".join(str(10 * (r * 4 + c)) for c in range(4)) for r in range(6)) + "\n"
    )
    restored = read_scan(tmp_path / 'scan')
    assert restored.intensities.min() == 0.0
    assert restored.intensities.max() == 1.0


def test_read_scan_shape_mismatch(tmp_path, small_scan):
    write_scan(small_scan, tmp_path / 'scan')
    (tmp_path / 'scan.csv').write_text("0.1,0.2\n0.3,0.4\n")
    with pytest.raises(StorageError):
        read_scan(tmp_path / 'scan')


def test_read_scan_missing_files(tmp_path, small_scan):
    with pytest.raises(StorageError):
        read_scan(tmp_path / 'nothing')
    write_scan(small_scan, tmp_path / 'scan')
    (tmp_path / 'scan.csv').unlink()
    with pytest.raises(StorageError):
        read_scan(tmp_path / 'scan')


def test_scan_writes_are_deterministic(tmp_path, small_scan):
    write_scan(small_scan, tmp_path / 'a')
    write_scan(small_scan, tmp_path / 'b')
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()
    assert (tmp_path / 'a.json').read_bytes() == (tmp_path / 'b.json').read_bytes()


def test_database_round_trip(tmp_path, narrow_radar):
    db = build_database([0.06, 0.10], REBAR_CATALOG[:3], narrow_radar)
    write_database(db, tmp_path / 'db.json')
    restored = read_database(tmp_path / 'db.json')
    assert len(restored) == 6
    assert restored.matches_config(narrow_radar)
    for original, loaded in zip(db, restored):
        assert loaded.key == original.key
        np.testing.assert_allclose(loaded.curve, original.curve, rtol=1e-8)


def test_database_file_layout(tmp_path, narrow_radar):
    db = build_database([0.06], [rebar_size('#4')], narrow_radar)
    write_database(db, tmp_path / 'db.json')
    text = (tmp_path / 'db.json').read_text()
    assert text.endswith("}\n")
    data = json.loads(text)
    assert data['velocity_m_per_s'] == narrow_radar.wave_velocity
    assert set(data['entries'][0]) == {'depth', 'size', 'diameter', 'curve'}
    assert len(data['entries'][0]['curve']) == 61


def test_invalid_database_file(tmp_path):
    write_json({'entries': [{'depth': 0.1, 'size': '#12', 'curve': [1.0]}]}, tmp_path / 'db.json')
    with pytest.raises(StorageError):
        read_database(tmp_path / 'db.json')


def test_outlines_round_trip(tmp_path, radar):
    outline = HyperbolaOutline(3, np.array([12.5, 10.0, 11.25]), np.array([7, 8, 9]))
    dropped = [DroppedOutline(4, 2, "fewer than 15 columns")]
    write_outlines([outline], tmp_path / 'outlines.json', config=radar, dropped=dropped)
    outlines, config, restored_dropped = read_outlines(tmp_path / 'outlines.json')
    assert len(outlines) == 1
    assert outlines[0].label == 3
    assert outlines[0].rows.tolist() == [12.5, 10.0, 11.25]
    assert outlines[0].cols.tolist() == [7, 8, 9]
    assert config.same_grid(radar)
    assert restored_dropped == dropped

    data = read_json(tmp_path / 'outlines.json')
    assert data['outlines'][0]['apex_col'] == 8
    # row level 11 is first reached at columns 7 and 9
    assert data['outlines'][0]['apex_center'] == 8.0


def test_outlines_without_calibration(tmp_path):
    write_outlines([], tmp_path / 'outlines.json')
    outlines, config, dropped = read_outlines(tmp_path / 'outlines.json')
    assert (outlines, config, dropped) == ([], None, [])


def test_estimates_round_trip(tmp_path):
    runner_up = Candidate(0.08, rebar_size('#5'), 1.25)
    estimate = RebarEstimate(0.08, rebar_size('#6'), 0.75, 120, runner_up)
    lone = RebarEstimate(0.12, rebar_size('#3'), 2.0, 400)
    write_estimates([(1, estimate), (2, lone)], tmp_path / 'estimates.json')
    restored = read_estimates(tmp_path / 'estimates.json')
    assert restored == [(1, estimate), (2, lone)]


def test_report_round_trip(tmp_path):
    bar = RebarPlacement(0.3, 0.06, rebar_size('#3'))
    report = summarize([CaseOutcome(1, failures=(BarFailure(1, 0, bar, "no outline"),))])
    write_report(report, tmp_path / 'report.json')
    data = read_json(tmp_path / 'report.json')
    assert data['n_bars'] == 1
    assert data['depth_accuracy'] == 0.0
    assert data['failures'][0]['reason'] == "no outline"


def test_write_json_rounds_to_nine_digits(tmp_path):
    write_json({'value': 1 / 3, 'flag': np.bool_(True), 'n': np.int64(4)}, tmp_path / 'x.json')
    assert read_json(tmp_path / 'x.json') == {'value': 0.333333333, 'flag': True, 'n': 4}


def test_read_json_errors(tmp_path):
    with pytest.raises(StorageError):
        read_json(tmp_path / 'missing.json')
    (tmp_path / 'bad.json').write_text("{not json")
    with pytest.raises(StorageError):
        read_json(tmp_path / 'bad.json')
    (tmp_path / 'list.json').write_text("[1, 2]")
    with pytest.raises(StorageError):
        read_json(tmp_path / 'list.json')
