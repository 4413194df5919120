"""Monte-Carlo NMSE sweeps and named imaging scenarios."""

import math

import numpy as np
import pandas as pd
import pytest

from displaced_radar.errors import ConfigurationError, ConfigValidationError
from displaced_radar.execution.parallel_executor import ParallelExecutor
from displaced_radar.imaging.dictionary import ImagingGrid
from displaced_radar.imaging.recovery import SolverConfig
from displaced_radar.orchestration.experiments import (
    SCHEMES,
    Experiment,
    noise_stopping,
    noise_variance_for,
    run_nmse_sweep,
    run_scenario,
)
from displaced_radar.orchestration.scenarios import SYNC_OFFSETS_S, get_scenario, vehicle_scene
from displaced_radar.simulation.scene import Target
from displaced_radar.simulation.signal import sensor_steering


@pytest.fixture
def experiment(tiny_scene, small_grid):
    scene = tiny_scene.with_offsets(SYNC_OFFSETS_S)
    return Experiment(
        scene=scene, grid=small_grid, schemes=SCHEMES, snr_db=(math.inf,), n_trials=2, seed=11,
    )


def test_noise_variance_for_snr():
    assert noise_variance_for(math.inf) == 0.0
    assert noise_variance_for(10.0) == pytest.approx(0.1)
    assert noise_variance_for(-3.0) == pytest.approx(10 ** 0.3)


def test_noise_stopping_uses_expected_noise_norm():
    config = noise_stopping(SolverConfig(), 400, 0.01)
    assert config.residual_tol == pytest.approx(2.2)
    assert config.noise_variance == 0.01
    noiseless = noise_stopping(SolverConfig(), 400, 0.0)
    assert noiseless.residual_tol == pytest.approx(1e-9)
    assert noiseless.noise_variance is None


def test_noiseless_sweep_recovers_single_target(experiment):
    table = run_nmse_sweep(experiment)
    for scheme in SCHEMES:
        row = table.lookup(math.inf, scheme)
        assert row.n_failed == 0, scheme
        assert row.n_trials == 2
        limit = 0.05 if scheme == "bcs-cp" else 1e-6
        assert row.nmse_target < limit, scheme
        assert row.nmse_all < limit, scheme
    wide = table.wide_frame()
    assert list(wide["snr_db"]) == [math.inf]
    assert "bomp-ncp_target" in wide.columns
    assert len(table.trials_frame()) == 2 * len(SCHEMES)
    coefficients = table.coefficients_frame()
    assert set(coefficients["sensor"]) == {-1, 0, 1, 2}


def test_sweep_does_not_depend_on_worker_count(tiny_scene, small_grid):
    scene = tiny_scene.with_offsets(SYNC_OFFSETS_S)
    settings = dict(scene=scene, grid=small_grid, schemes=("single-omp", "bomp-ncp", "omp-cp"),
                    snr_db=(0.0, 10.0), n_trials=3, seed=5)
    serial = run_nmse_sweep(Experiment(**settings), ParallelExecutor(max_workers=1))
    threaded = run_nmse_sweep(Experiment(**settings), ParallelExecutor(max_workers=3))
    pd.testing.assert_frame_equal(serial.trials_frame(), threaded.trials_frame())
    pd.testing.assert_frame_equal(serial.to_frame(), threaded.to_frame())


def test_compressed_sweep_still_recovers(tiny_scene, small_grid):
    experiment = Experiment(
        scene=tiny_scene.with_offsets(SYNC_OFFSETS_S), grid=small_grid, schemes=("bomp-ncp", "omp-cp"),
        snr_db=(math.inf,), n_trials=1, compression_ratio=2.0,
    )
    table = run_nmse_sweep(experiment)
    for scheme in ("bomp-ncp", "omp-cp"):
        assert table.lookup(math.inf, scheme).nmse_target < 1e-6


def test_experiment_validation(tiny_scene, small_grid):
    with pytest.raises(ConfigValidationError) as info:
        Experiment(scene=tiny_scene, grid=small_grid, schemes=("fast-cp",), n_trials=0)
    assert len(info.value.errors) == 2
    far = tiny_scene.with_targets([Target.common((0.0, 30.0, 0.0), 1.0, 3)])
    with pytest.raises(ConfigValidationError, match="outside the imaging grid"):
        Experiment(scene=far, grid=small_grid)


def test_targets_sharing_a_cell_are_rejected(tiny_scene, small_grid):
    crowded = tiny_scene.with_targets([
        Target.common((0.0, 20.0, 0.0), 1.0, 3),
        Target.common((0.1, 20.1, 0.0), 1.0, 3),
    ])
    experiment = Experiment(scene=crowded, grid=small_grid, n_trials=1)
    with pytest.raises(ConfigurationError, match="same grid cell"):
        run_nmse_sweep(experiment)


def test_medium_range_scenario_synchronises_and_images():
    scene = vehicle_scene((), reduced=True, offsets_s=SYNC_OFFSETS_S)
    grid = ImagingGrid.from_spacing((-1.0, 1.0), (20.0, 22.0), 0.5)
    experiment = Experiment(scene=scene, grid=grid, snr_db=(math.inf,), n_trials=1, seed=3)
    report = run_scenario(experiment, "medium-range-5tgt")

    spec = get_scenario("medium-range-5tgt")
    cells = sorted(spec.grid.cell_of(p) for p in spec.positions())
    assert report.grid == spec.grid
    assert report.images["non-coherent"].support == tuple(cells)
    np.testing.assert_allclose(report.sync.offsets_s, SYNC_OFFSETS_S, rtol=1e-6, atol=1e-15)
    assert report.sync.anchor_cells == [spec.grid.cell_of(spec.positions()[0])]
    assert set(cells) <= set(report.images["coherent"].support)
    assert set(report.detections) == {"single", "non-coherent", "coherent", "coherent-unsynced", "coherent-bcs"}
    assert math.isfinite(report.correlation_loss_db)
    assert report.separation == {}


def test_coherent_columns_decorrelate_the_close_pair():
    scene = vehicle_scene(reduced=True)
    spec = get_scenario("close-pair")
    pair = spec.positions()[list(spec.close_pair)]
    blocks = [sensor_steering(radar, pair, scene.ego_velocity).reshape(2, -1) for radar in scene.radars]
    inner = np.array([np.vdot(first, second) for first, second in blocks])
    norms = np.array([np.linalg.norm(first) * np.linalg.norm(second) for first, second in blocks])
    # per-sensor free phases (non-coherent) versus one common phase (coherent)
    non_coherent = np.sum(np.abs(inner)) / np.sum(norms)
    coherent = np.abs(np.sum(inner)) / np.sum(norms)
    assert non_coherent > 0.95
    assert coherent < 0.9 * non_coherent


def test_close_pair_scenario_resolves_only_coherently():
    offsets = (0.0, 50e-6, 25e-6)
    scene = vehicle_scene((), reduced=True, offsets_s=offsets)
    grid = ImagingGrid.from_spacing((-1.0, 1.0), (20.0, 22.0), 0.5)
    experiment = Experiment(scene=scene, grid=grid, schemes=("omp-cp",), snr_db=(5.0,), n_trials=1, seed=2)
    report = run_scenario(experiment, "close-pair")

    assert report.grid == get_scenario("close-pair").grid
    assert set(report.separation) == {"single", "non-coherent", "coherent", "coherent-unsynced"}
    assert report.separation["coherent"]
    assert not report.separation["non-coherent"]
    np.testing.assert_allclose(report.sync.offsets_s, offsets, rtol=0.1, atol=1e-9)
    assert report.correlation_loss_db >= 1.0


def test_low_snr_sweep_orders_schemes(tiny_scene, small_grid):
    targets = [Target.common((0.0, 20.0, 0.0), 2.0, 3), Target.common((-1.5, 21.0, 0.0), 1.0, 3)]
    scene = tiny_scene.with_targets(targets).with_offsets(SYNC_OFFSETS_S)
    experiment = Experiment(
        scene=scene, grid=small_grid, schemes=("single-omp", "bomp-ncp", "omp-cp"),
        snr_db=(0.0, 20.0), n_trials=40, seed=3,
    )
    table = run_nmse_sweep(experiment, ParallelExecutor(max_workers=1))
    for scheme in experiment.schemes:
        low, high = table.lookup(0.0, scheme), table.lookup(20.0, scheme)
        assert low.n_failed == 0 and high.n_failed == 0, scheme
        assert high.nmse_target < low.nmse_target, scheme
    coherent = table.lookup(0.0, "omp-cp").nmse_target
    assert coherent < table.lookup(0.0, "single-omp").nmse_target
    assert coherent < table.lookup(0.0, "bomp-ncp").nmse_target
