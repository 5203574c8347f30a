"""Tests for calibration, normalization and the rebar catalog."""

import math

import numpy as np
import pytest

from core import (
    DEFAULT_DT,
    REBAR_CATALOG,
    SPEED_OF_LIGHT,
    BScan,
    EmptyInput,
    InvalidPermittivity,
    InvalidPlacement,
    InvalidRadarConfig,
    InvalidSample,
    RadarConfig,
    RebarPlacement,
    catalog_slice,
    normalize,
    rebar_size,
    velocity_from_permittivity,
)


def test_velocity_from_permittivity():
    assert velocity_from_permittivity(1.0) == SPEED_OF_LIGHT
    assert velocity_from_permittivity(6.0) == pytest.approx(1.2239e8, rel=1e-4)


@pytest.mark.parametrize("eps_r", [0.5, 0.0, -3.0, float('nan'), float('inf')])
def test_invalid_permittivity(eps_r):
    with pytest.raises(InvalidPermittivity):
        velocity_from_permittivity(eps_r)


def test_default_radar_config(radar):
    assert radar.dt == DEFAULT_DT
    assert radar.dt == pytest.approx(10e-9 / 512)
    assert radar.shape == (512, 600)
    assert radar.aperture == pytest.approx(2.995)
    assert radar.wave_velocity == velocity_from_permittivity(6.0)


@pytest.mark.parametrize("kwargs", [
    {'dx': 0.0},
    {'dt': -1e-12},
    {'center_frequency': 0.0},
    {'n_samples': 1},
    {'time_zero_row': 512},
])
def test_invalid_radar_config(kwargs):
    with pytest.raises(InvalidRadarConfig):
        RadarConfig(**kwargs)


def test_radar_config_metadata_round_trip(radar):
    data = radar.to_dict()
    assert data['n_samples'] == 512
    assert data['dt_ns'] == pytest.approx(10 / 512)
    restored = RadarConfig.from_dict(data)
    assert restored.same_grid(radar)
    assert restored.shape == radar.shape


def test_same_grid_detects_permittivity_change(radar):
    assert not radar.same_grid(RadarConfig(relative_permittivity=9.0))


def test_normalize_min_max():
    out = normalize([[1.0, 3.0], [5.0, 9.0]])
    np.testing.assert_allclose(out, [[0.0, 0.25], [0.5, 1.0]])


def test_normalize_constant_grid_is_zero():
    assert np.all(normalize(np.full((3, 4), 7.0)) == 0.0)


def test_normalize_errors():
    with pytest.raises(EmptyInput):
        normalize(np.zeros((0, 3)))
    with pytest.raises(InvalidSample):
        normalize([[0.0, float('nan')]])


def test_bscan_validation_and_immutability():
    config = RadarConfig(n_samples=4, n_traces=3, time_zero_row=0)
    scan = BScan(np.full((4, 3), 0.5), config)
    with pytest.raises(ValueError):
        scan.intensities[0, 0] = 1.0
    with pytest.raises(InvalidSample):
        BScan(np.full((4, 3), 1.5), config)
    with pytest.raises(InvalidSample):
        BScan(np.zeros((3, 3)), config)


def test_bscan_from_raw_normalizes():
    scan = BScan.from_raw(np.arange(12.0).reshape(4, 3))
    assert scan.intensities.min() == 0.0
    assert scan.intensities.max() == 1.0
    assert scan.config.shape == (4, 3)


def test_catalog_is_sorted_by_diameter():
    diameters = [size.diameter for size in REBAR_CATALOG]
    assert diameters == sorted(diameters)
    assert len(REBAR_CATALOG) == 11


def test_rebar_size_lookup():
    assert rebar_size('#7').diameter == pytest.approx(0.022225)
    assert rebar_size('7') == rebar_size('#7')
    assert rebar_size('#7').radius == pytest.approx(0.0111125)
    with pytest.raises(KeyError):
        rebar_size('#12')


def test_catalog_slice():
    sizes = catalog_slice('#3', '#8')
    assert [s.designation for s in sizes] == ['#3', '#4', '#5', '#6', '#7', '#8']
    assert rebar_size('#14').ordinal == 9


def test_rebar_placement(radar):
    placement = RebarPlacement(1.5, 0.10, rebar_size('#7'))
    assert placement.apex_col(radar) == 300
    assert placement.inside(radar)
    assert not RebarPlacement(3.5, 0.10, rebar_size('#7')).inside(radar)
    assert RebarPlacement.from_dict(placement.to_dict()) == placement


@pytest.mark.parametrize("depth", [0.0, -0.01, math.inf])
def test_rebar_placement_rejects_bad_depth(depth):
    with pytest.raises(InvalidPlacement):
        RebarPlacement(1.0, depth, rebar_size('#4'))
