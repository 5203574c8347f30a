"""Tests for the B-scan simulator and the case suite."""

import numpy as np
import pytest

from core import RebarPlacement, rebar_size
from simulate import (
    BARS_PER_CASE,
    PlacementOutOfBounds,
    SceneSpec,
    SimulationError,
    build_case_suite,
    default_direct_wave_rows,
    evenly_spaced,
    figure_scene,
    ricker,
    synthesize_bscan,
)
from theory import travel_time


def test_ricker_peak_and_symmetry():
    times = np.linspace(-1e-9, 1e-9, 101)
    wavelet = ricker(1.5e9, times)
    assert ricker(1.5e9, 0.0) == 1.0
    np.testing.assert_allclose(wavelet, wavelet[::-1])
    assert wavelet.max() == pytest.approx(1.0)


def test_default_direct_wave_rows(radar):
    assert radar.main_lobe_rows == 8
    assert default_direct_wave_rows(radar) == 48
    assert SceneSpec(config=radar).direct_wave_rows == 48


def test_empty_scene_is_dark_below_direct_wave(radar):
    spec = SceneSpec(config=radar)
    scan, placements = synthesize_bscan(spec)
    assert placements == ()
    assert scan.intensities.max() == 1.0
    assert np.all(scan.intensities[spec.direct_wave_rows:] == 0.0)
    # the direct wave peaks at time zero in every column
    assert np.all(np.argmax(scan.intensities, axis=0) == radar.time_zero_row)


def test_single_bar_peaks_on_travel_time(radar):
    bar = RebarPlacement(1.5, 0.10, rebar_size('#7'))
    spec = SceneSpec(config=radar, placements=(bar,))
    scan, _ = synthesize_bscan(spec)
    below = scan.intensities[spec.direct_wave_rows:]
    x = np.arange(radar.n_traces) * radar.dx
    for col in range(0, radar.n_traces, 50):
        t = travel_time(x[col], bar.x0, bar.depth, bar.size.radius, radar.wave_velocity)
        expected = radar.time_zero_row + int(np.rint(t / radar.dt))
        if expected >= radar.n_samples:
            continue
        assert spec.direct_wave_rows + int(np.argmax(below[:, col])) == expected


def test_bar_apex_is_half_the_direct_wave(radar):
    bar = RebarPlacement(1.5, 0.10, rebar_size('#7'))
    scan, _ = synthesize_bscan(SceneSpec(config=radar, placements=(bar,)))
    apex_col = bar.apex_col(radar)
    assert scan.intensities[48:, apex_col].max() == pytest.approx(0.5, abs=0.01)


def test_noise_is_seeded(radar):
    bar = RebarPlacement(1.0, 0.08, rebar_size('#5'))
    a, _ = synthesize_bscan(SceneSpec(config=radar, placements=(bar,), noise_sigma=0.02, seed=3))
    b, _ = synthesize_bscan(SceneSpec(config=radar, placements=(bar,), noise_sigma=0.02, seed=3))
    c, _ = synthesize_bscan(SceneSpec(config=radar, placements=(bar,), noise_sigma=0.02, seed=4))
    assert np.array_equal(a.intensities, b.intensities)
    assert not np.array_equal(a.intensities, c.intensities)
    assert a.intensities.min() >= 0.0 and a.intensities.max() <= 1.0


def test_bar_outside_aperture(radar):
    bar = RebarPlacement(5.0, 0.10, rebar_size('#7'))
    with pytest.raises(PlacementOutOfBounds):
        synthesize_bscan(SceneSpec(config=radar, placements=(bar,)))


def test_negative_noise_rejected(radar):
    with pytest.raises(SimulationError):
        SceneSpec(config=radar, noise_sigma=-0.1)


def test_scene_spec_dict_round_trip(radar):
    spec = figure_scene(radar, noise_sigma=0.01, seed=9)
    restored = SceneSpec.from_dict(spec.to_dict())
    assert restored.placements == spec.placements
    assert restored.noise_sigma == 0.01
    assert restored.seed == 9
    assert restored.config.same_grid(radar)


def test_figure_scene(radar):
    spec = figure_scene(radar)
    assert [p.depth for p in spec.placements] == [0.06, 0.08, 0.10, 0.12, 0.14]
    assert {p.size.designation for p in spec.placements} == {'#7'}


def test_evenly_spaced_positions(radar):
    positions = evenly_spaced(radar, 5)
    assert positions[0] == pytest.approx(radar.aperture * 0.1)
    assert list(np.diff(positions)) == pytest.approx([radar.aperture / 5] * 4)


def test_case_suite_layout(radar):
    suite = build_case_suite(radar, seed=7)
    assert len(suite) == 45
    assert suite.n_bars == 225
    assert [case.case_id for case in suite.cases] == list(range(1, 46))

    first, last = suite.cases[0], suite.cases[-1]
    assert (first.depth, first.size.designation) == (0.06, '#3')
    assert (last.depth, last.size.designation) == (0.14, '#18')
    assert all(case.scene.seed == 7 + case.case_id for case in suite.cases)
    assert all(len(case.scene.placements) == BARS_PER_CASE for case in suite.cases)

    per_depth = {}
    for case in suite.cases:
        per_depth[case.depth] = per_depth.get(case.depth, 0) + 1
    assert per_depth == {0.06: 6, 0.08: 9, 0.10: 9, 0.12: 10, 0.14: 11}


def test_case_suite_select(radar):
    suite = build_case_suite(radar).select([3, 1, 99])
    assert [case.case_id for case in suite.cases] == [1, 3]


def test_scene_from_metadata_without_scene_fields(radar):
    spec = SceneSpec.from_dict(radar.to_dict())
    assert spec.placements == ()
    assert spec.noise_sigma == 0.0
    assert spec.direct_wave_rows == 48


@pytest.mark.parametrize("update", [
    {'placements': [{'x0': 1.0, 'depth': 0.1}]},
    {'noise_sigma': 'loud'},
    {'seed': 'x'},
])
def test_malformed_scene_dict(radar, update):
    with pytest.raises(SimulationError):
        SceneSpec.from_dict({**radar.to_dict(), **update})


def test_scene_dict_needs_calibration():
    with pytest.raises(SimulationError):
        SceneSpec.from_dict({'n_samples': 512})
