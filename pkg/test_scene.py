"""Scene geometry: ranges, array layout, line of sight and validation."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import tiny_radars
from displaced_radar.errors import ConfigurationError, DegenerateGeometryError, GeometryIndexError
from displaced_radar.orchestration.scenarios import vehicle_grid, vehicle_scene
from displaced_radar.simulation.scene import (
    RadarUnit,
    Scene,
    Target,
    azimuth_elevation,
    bistatic_range,
    direction_and_doppler,
    make_radar,
    neglected_range_error,
    range_gradients,
    uniform_mimo_offsets,
)


def test_bistatic_range_sums_both_legs(tiny_scene):
    radar = tiny_scene.radars[1]
    p = np.array([3.0, 12.0, 0.5])
    expected = np.linalg.norm(p - radar.tx_positions[1]) + np.linalg.norm(p - radar.rx_positions[2])
    assert bistatic_range(tiny_scene, 1, 2, 1, p) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize(
    "origin, tx, rx, target, expected",
    [
        ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 25.0, 0.0), 50.0),
        ((0.0, 2.5, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 25.0, 0.0), 45.0),
        ((0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (-0.5, 0.0, 0.0), (0.0, 1.0, 0.0), 2.0 * math.sqrt(1.25)),
    ],
)
def test_bistatic_range_reference_values(origin, tx, rx, target, expected):
    scene = Scene(radars=(RadarUnit(origin=origin, tx_offsets=[tx], rx_offsets=[rx]),))
    assert bistatic_range(scene, 0, 0, 0, target) == pytest.approx(expected, rel=1e-12)


def test_line_of_sight_reference_values():
    scene = Scene(radars=(make_radar((0.0, 0.0, 0.0)),), ego_velocity=np.array([1.0, 15.0, 0.0]))
    unit, v_q = direction_and_doppler(scene, 0, (3.0, 4.0, 0.0))
    assert_allclose(unit, [0.6, 0.8, 0.0])
    assert v_q == pytest.approx(12.6)
    azimuth, elevation = azimuth_elevation((0.0, 0.0, 0.0), (3.0, 4.0, 5.0))
    assert azimuth == pytest.approx(math.atan2(4.0, 3.0))
    assert elevation == pytest.approx(math.pi / 4)
    with pytest.raises(DegenerateGeometryError):
        direction_and_doppler(scene, 0, (0.0, 0.0, 0.0))


def test_bistatic_range_is_bounded_below_by_aperture(tiny_scene, rng):
    radar = tiny_scene.radars[0]
    elements = np.vstack([radar.tx_positions, radar.rx_positions])
    centre = elements.mean(axis=0)
    diameter = 2.0 * np.max(np.linalg.norm(elements - centre, axis=1))
    for _ in range(20):
        p = rng.uniform([-10.0, 1.0, -1.0], [10.0, 40.0, 1.0])
        for m in range(radar.n_rx):
            for n in range(radar.n_tx):
                assert bistatic_range(tiny_scene, 0, m, n, p) >= 2 * np.linalg.norm(p - centre) - diameter
        unit, _ = direction_and_doppler(tiny_scene, 0, p)
        assert np.linalg.norm(unit) == pytest.approx(1.0, abs=1e-12)


def test_bistatic_range_rejects_bad_indices(tiny_scene):
    with pytest.raises(GeometryIndexError):
        bistatic_range(tiny_scene, 3, 0, 0, (0.0, 10.0, 0.0))
    with pytest.raises(GeometryIndexError):
        bistatic_range(tiny_scene, 0, 4, 0, (0.0, 10.0, 0.0))
    with pytest.raises(GeometryIndexError):
        bistatic_range(tiny_scene, 0, 0, 2, (0.0, 10.0, 0.0))


def test_default_layout_gives_filled_half_wavelength_virtual_array():
    wavelength = 3e8 / 77e9
    tx, rx = uniform_mimo_offsets(2, 4, wavelength)
    virtual = np.sort((tx[:, None, 0] + rx[None, :, 0]).ravel())
    assert_allclose(np.diff(virtual), wavelength / 2, rtol=1e-9)
    assert virtual.mean() == pytest.approx(0.0, abs=1e-15)


def test_vehicle_waveform_sizes():
    scene = vehicle_scene()
    assert scene.dims == (3, 4, 2, 10, 150)
    assert scene.radars[0].range_resolution == pytest.approx(0.3)
    reduced = vehicle_scene(reduced=True)
    assert reduced.dims == (3, 4, 2, 4, 32)


def test_vehicle_grid_uses_quarter_metre_cells():
    grid = vehicle_grid()
    assert grid.x[1] - grid.x[0] == pytest.approx(0.25)
    assert grid.y[1] - grid.y[0] == pytest.approx(0.25)
    assert (grid.nx, grid.ny) == (65, 81)
    assert grid.x_range == (-8.0, 8.0) and grid.y_range == (15.0, 35.0)


def test_doppler_projects_ego_velocity_on_line_of_sight(tiny_scene):
    unit, v_q = direction_and_doppler(tiny_scene, 0, (0.0, 10.0, 0.0))
    assert_allclose(unit, [0.0, 1.0, 0.0])
    assert v_q == pytest.approx(15.0)
    _, v_side = direction_and_doppler(tiny_scene, 0, (10.0, 0.0, 0.0))
    assert v_side == pytest.approx(1.0)


def test_azimuth_elevation_and_degenerate_point():
    azimuth, elevation = azimuth_elevation((0.0, 0.0, 0.0), (1.0, 1.0, math.sqrt(2.0)))
    assert azimuth == pytest.approx(math.pi / 4)
    assert elevation == pytest.approx(math.pi / 4)
    with pytest.raises(DegenerateGeometryError):
        azimuth_elevation((0.0, 0.0, 0.0), (0.0, 0.0, 3.0))


def test_range_gradient_matches_finite_difference(tiny_scene, rng):
    radar = tiny_scene.radars[2]
    for _ in range(5):
        p = np.array([rng.uniform(-5, 5), rng.uniform(5, 30), rng.uniform(-1, 1)])
        analytic = range_gradients(radar, p[None, :])[0]
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = 1e-6
            plus = np.array([[bistatic_range(tiny_scene, 2, m, n, p + step) for n in range(2)] for m in range(4)])
            minus = np.array([[bistatic_range(tiny_scene, 2, m, n, p - step) for n in range(2)] for m in range(4)])
            assert_allclose(analytic[:, :, axis], (plus - minus) / 2e-6, rtol=1e-4, atol=1e-7)


def test_neglected_range_error_tracks_mounting_offset():
    radar = make_radar((0.0, 0.0, 0.0), position_error=(0.0, 0.01, 0.0))
    scene = Scene(radars=(radar,))
    error = neglected_range_error(scene, 0, 0, 0, (0.0, 10.0, 0.0))
    assert error == pytest.approx(-0.02, abs=1e-4)
    clean = Scene(radars=(make_radar((0.0, 0.0, 0.0)),))
    assert neglected_range_error(clean, 0, 1, 1, (2.0, 10.0, 0.0)) == 0.0


def test_scene_rejects_mismatched_frames():
    radars = tiny_radars()
    other = make_radar((0.0, 5.0, 0.0), n_tx=2, n_rx=4, bandwidth_hz=500e6, chirp_s=5e-6, fs_hz=3.2e6, n_chirps=3)
    with pytest.raises(ConfigurationError, match="frame structure"):
        Scene(radars=radars + (other,))


def test_scene_rejects_wrong_reflectivity_count():
    radars = tiny_radars()
    with pytest.raises(ConfigurationError, match="reflectivities"):
        Scene(radars=radars, targets=(Target((0.0, 10.0, 0.0), [1.0, 1.0]),))


def test_waveform_validation():
    tx, rx = uniform_mimo_offsets(1, 1, 0.004)
    with pytest.raises(ConfigurationError):
        RadarUnit(origin=(0, 0, 0), tx_offsets=tx, rx_offsets=rx, chirp_s=40e-6, pri_s=30e-6)
    with pytest.raises(ConfigurationError):
        RadarUnit(origin=(0, 0, 0), tx_offsets=tx, rx_offsets=rx, fs_hz=1e5, chirp_s=5e-6)


def test_subset_and_offsets(tiny_scene):
    shifted = tiny_scene.with_offsets([0.0, 1e-5, 5e-6])
    assert_allclose(shifted.sync_offsets, [0.0, 1e-5, 5e-6])
    single = shifted.subset([2])
    assert single.n_radars == 1
    assert single.radars[0].sync_offset_s == 5e-6
    assert single.targets[0].reflectivity.shape == (1,)
    assert tiny_scene.sensor_rows(1) == slice(256, 512)
    with pytest.raises(ConfigurationError):
        tiny_scene.with_offsets([0.0])


def test_planar_detection(tiny_scene):
    assert tiny_scene.is_planar
    lifted = tiny_scene.with_targets([Target.common((0.0, 10.0, 1.0), 1.0, 3)])
    assert not lifted.is_planar
