"""Clock-offset estimation from an isolated anchor."""

import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from displaced_radar.errors import ConfigurationError, NoAnchorError, ObservabilityError
from displaced_radar.imaging.dictionary import build_block_dictionary
from displaced_radar.imaging.recovery import SolverConfig, SparseImage, block_omp
from displaced_radar.imaging.sync import anchor_amplitudes, estimate_offsets, select_anchor
from displaced_radar.simulation.scene import SPEED_OF_LIGHT, direction_and_doppler
from displaced_radar.simulation.signal import NoiseSpec, add_noise, snr_to_variance, synthesize_coherent

OFFSETS = (0.0, 1e-5, 5e-6)
ANCHOR = (0.0, 20.0, 0.0)


@pytest.fixture
def shifted(tiny_scene):
    scene = tiny_scene.with_offsets(OFFSETS)
    return scene, synthesize_coherent(scene, NoiseSpec())


def test_matched_filter_recovers_offsets(shifted):
    scene, cube = shifted
    estimate = estimate_offsets(scene, cube, [ANCHOR])
    assert_allclose(estimate.offsets_s, OFFSETS, rtol=1e-9, atol=1e-15)
    assert estimate.offsets_s[0] == 0.0
    assert_allclose(estimate.confidence, 1.0, rtol=1e-9)
    assert not any(estimate.ambiguous)
    assert np.all(estimate.max_unambiguous_offset_s[1:] > 1e-5)


def test_matched_filter_offsets_at_twenty_db(shifted):
    scene, clean = shifted
    variance = snr_to_variance(20.0, 1.0)
    errors = []
    for trial in range(30):
        noisy = add_noise(clean, NoiseSpec(variance=variance, seed=trial))
        estimate = estimate_offsets(scene, noisy, [ANCHOR])
        assert estimate.offsets_s[0] == 0.0
        errors.append(estimate.offsets_s - np.asarray(OFFSETS))
    rms = np.sqrt(np.mean(np.square(errors), axis=0))
    assert np.all(rms[1:] < 0.05 * np.asarray(OFFSETS[1:]))
    assert np.all(rms[1:] > 0.0)


def test_anchor_amplitudes_carry_sync_phase(shifted):
    scene, cube = shifted
    amplitudes = anchor_amplitudes(scene, cube, ANCHOR)
    assert amplitudes[0] == pytest.approx(1.0)
    assert_allclose(np.abs(amplitudes), 1.0, rtol=1e-9)
    assert np.angle(amplitudes[1]) < 0


def test_image_amplitudes_recover_offsets(shifted, small_grid):
    scene, cube = shifted
    image = block_omp(build_block_dictionary(scene, small_grid), cube.vector(), SolverConfig(max_sparsity=1))
    anchors = select_anchor(image, small_grid, min_isolation_m=1.0)
    assert anchors == [small_grid.cell_of(ANCHOR)]
    estimate = estimate_offsets(scene, cube, anchors, grid=small_grid, amplitude_source="image", image=image)
    assert_allclose(estimate.offsets_s, OFFSETS, rtol=1e-8, atol=1e-15)
    assert estimate.anchor_cells == anchors
    rows = estimate.to_rows()
    assert [row["sensor"] for row in rows] == [0, 1, 2]
    assert "anchor at (0.000, 20.000, 0.000) m" in estimate.report()


def test_static_platform_is_unobservable(static_scene):
    cube = synthesize_coherent(static_scene, NoiseSpec())
    with pytest.raises(ObservabilityError, match="unobservable"):
        estimate_offsets(static_scene, cube, [(1.0, 15.0, 0.0)])


def test_missing_anchor(shifted, small_grid):
    scene, cube = shifted
    empty = SparseImage(coefficients=np.zeros(small_grid.n_cells * 3, dtype=complex), support=(),
                        residual_norm=0.0, iterations=0, block_size=3)
    with pytest.raises(NoAnchorError):
        select_anchor(empty, small_grid, 1.0)
    with pytest.raises(NoAnchorError):
        estimate_offsets(scene, cube, [])
    with pytest.raises(ConfigurationError):
        estimate_offsets(scene, cube, [ANCHOR], amplitude_source="image")


def test_select_anchor_skips_crowded_detections(small_grid):
    strong = small_grid.cell_of((0.0, 20.0, 0.0))
    neighbour = small_grid.cell_of((0.5, 20.0, 0.0))
    far = small_grid.cell_of((-2.0, 18.0, 0.0))
    coefficients = np.zeros(small_grid.n_cells, dtype=complex)
    coefficients[[strong, neighbour, far]] = [3.0, 2.0, 1.0j]
    image = SparseImage(coefficients=coefficients, support=(), residual_norm=0.0, iterations=0)
    assert select_anchor(image, small_grid, 1.0, count=2) == [strong, far]
    assert select_anchor(image, small_grid, 0.0, count=2) == [strong, neighbour]
    with pytest.raises(ConfigurationError):
        select_anchor(image, small_grid, 1.0, count=0)


def test_offset_at_wrap_limit_is_flagged(tiny_scene, caplog):
    _, speed = direction_and_doppler(tiny_scene, 1, ANCHOR)
    limit = SPEED_OF_LIGHT / (4.0 * tiny_scene.radars[1].carrier_hz * abs(speed))
    scene = tiny_scene.with_offsets([0.0, limit, 0.0])
    cube = synthesize_coherent(scene, NoiseSpec())
    with caplog.at_level(logging.WARNING, logger="displaced_radar.imaging.sync"):
        estimate = estimate_offsets(scene, cube, [ANCHOR])
    assert estimate.ambiguous == [False, True, False]
    assert abs(estimate.offsets_s[1]) == pytest.approx(limit, rel=1e-6)
    assert estimate.max_unambiguous_offset_s[1] == pytest.approx(limit)
    assert math.isinf(estimate.max_unambiguous_offset_s[0])
    assert "wrap limit" in caplog.text
