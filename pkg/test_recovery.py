"""Greedy, shrinkage and Bayesian sparse solvers plus the NMSE metric."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from displaced_radar.errors import ConfigurationError, ConfigValidationError, UndefinedMetricError
from displaced_radar.imaging.dictionary import MatrixOperator, build_block_dictionary
from displaced_radar.imaging.recovery import (
    SOLVERS,
    SolverConfig,
    bcs_rvm,
    block_grams,
    block_omp,
    l1_map,
    nmse,
    omp,
    soft_threshold,
)
from displaced_radar.simulation.scene import Target
from displaced_radar.simulation.signal import NoiseSpec, synthesize_noncoherent

TRUE_COLUMNS = (7, 42, 91)
TRUE_VALUES = np.array([1.5 + 0.5j, -1.0 + 1.0j, 0.8 - 1.2j])


@pytest.fixture
def random_problem(rng):
    matrix = rng.standard_normal((80, 100)) + 1j * rng.standard_normal((80, 100))
    matrix /= np.linalg.norm(matrix, axis=0)
    truth = np.zeros(100, dtype=complex)
    truth[list(TRUE_COLUMNS)] = TRUE_VALUES
    return matrix, truth, matrix @ truth


def test_omp_recovers_sparse_vector(random_problem):
    matrix, truth, data = random_problem
    image = omp(matrix, data, SolverConfig(max_sparsity=5))
    assert image.converged
    assert set(image.indices) == set(TRUE_COLUMNS)
    assert image.iterations == 3
    assert_allclose(image.coefficients, truth, atol=1e-8)
    assert image.residual_history[0] == pytest.approx(np.linalg.norm(data))
    assert all(b <= a + 1e-12 for a, b in zip(image.residual_history, image.residual_history[1:]))


def test_omp_hitting_sparsity_cap_counts_as_converged(random_problem):
    matrix, _, data = random_problem
    image = omp(matrix, data, SolverConfig(max_sparsity=2))
    assert image.converged
    assert len(image.indices) == 2
    assert image.residual_norm > 0.1


def test_solvers_validate_inputs(random_problem):
    matrix, _, data = random_problem
    with pytest.raises(ConfigurationError, match="data length"):
        omp(matrix, data[:-1], SolverConfig())
    with pytest.raises(ConfigurationError, match="max_sparsity"):
        omp(matrix, data, SolverConfig(max_sparsity=101))


def test_zero_data_gives_empty_image(random_problem):
    matrix, _, _ = random_problem
    for name, solver in SOLVERS.items():
        config = SolverConfig(l1_weight=1.0)
        image = solver(matrix, np.zeros(80), config)
        assert image.support == ()
        assert not np.any(image.coefficients), name


def test_block_omp_recovers_targets_on_block_dictionary(tiny_scene, small_grid):
    targets = [
        Target((0.0, 20.0, 0.0), [1.0, 0.8j, -0.6]),
        Target((-1.5, 21.5, 0.0), [0.7 - 0.2j, 0.9, 0.5j]),
    ]
    scene = tiny_scene.with_targets(targets)
    data = synthesize_noncoherent(scene, NoiseSpec()).vector()
    op = build_block_dictionary(scene, small_grid)
    image = block_omp(op, data, SolverConfig(max_sparsity=2))

    cells = [small_grid.cell_of(t.position) for t in targets]
    assert image.support == tuple(sorted(cells))
    assert image.block_size == 3
    blocks = image.cell_coefficients()
    for cell, target in zip(cells, targets):
        assert_allclose(blocks[cell], target.reflectivity, atol=1e-8)

    indices = list(image.indices)
    expected, *_ = np.linalg.lstsq(op.columns(indices), data, rcond=None)
    assert_allclose(image.coefficients[indices], expected, atol=1e-8)


def test_block_grams_of_block_dictionary_are_diagonal(tiny_scene, small_grid):
    op = build_block_dictionary(tiny_scene, small_grid)
    grams = block_grams(op)
    assert grams.shape == (small_grid.n_cells, 3, 3)
    assert_allclose(grams[5], np.eye(3) * tiny_scene.samples_per_sensor)
    dense = MatrixOperator(op.columns(np.arange(30)), block_size=3)
    assert_allclose(block_grams(dense), grams[:10], atol=1e-9)


def test_soft_threshold_keeps_phase():
    values = np.array([3.0 * np.exp(0.5j), 0.5, 0.0])
    shrunk = soft_threshold(values, 1.0)
    assert_allclose(shrunk, [2.0 * np.exp(0.5j), 0.0, 0.0])


def test_l1_map_finds_support_and_debiases(random_problem):
    matrix, truth, data = random_problem
    weight = 2e-3 * np.max(np.abs(matrix.conj().T @ data))
    image = l1_map(matrix, data, SolverConfig(max_sparsity=3, l1_weight=weight, max_iters=3000))
    assert set(image.support) == set(TRUE_COLUMNS)
    assert_allclose(image.coefficients, truth, atol=1e-8)
    assert image.diagnostics["l1_weight"] == weight
    assert image.diagnostics["objective"][-1] < image.diagnostics["objective"][0]


def test_l1_map_needs_a_weight(random_problem):
    matrix, _, data = random_problem
    with pytest.raises(ConfigurationError, match="l1_weight"):
        l1_map(matrix, data, SolverConfig())


def test_bcs_rvm_finds_targets_in_light_noise(random_problem, rng):
    matrix, truth, data = random_problem
    noisy = data + 0.01 * (rng.standard_normal(80) + 1j * rng.standard_normal(80)) / np.sqrt(2)
    image = bcs_rvm(matrix, noisy, SolverConfig(max_iters=1000))
    assert set(TRUE_COLUMNS) <= set(image.indices)
    assert_allclose(image.coefficients, truth, atol=0.05)
    assert image.noise_variance > 0
    assert 0.0 <= image.diagnostics["gamma_min"] <= image.diagnostics["gamma_max"] <= 1.0


def test_bcs_without_learning_is_ridge_regression(random_problem):
    matrix, _, data = random_problem
    sigma2, beta = 0.05, 2.0
    config = SolverConfig(learn_hyperparameters=False, rvm_refit=False)
    image = bcs_rvm(matrix, data, config, noise_variance=sigma2, initial_precision=beta)
    gram = matrix.conj().T @ matrix
    expected = np.linalg.solve(gram + sigma2 * beta * np.eye(100), matrix.conj().T @ data)
    assert image.iterations == 1
    assert_allclose(image.coefficients, expected, rtol=1e-8, atol=1e-10)
    assert_allclose(image.diagnostics["posterior_mean"], expected, rtol=1e-8, atol=1e-10)


def test_solver_config_validation_collects_errors():
    with pytest.raises(ConfigValidationError) as info:
        SolverConfig(max_sparsity=0, residual_tol=0.0, rvm_hyper=(1.0, -1.0, 0.0, 0.0))
    assert len(info.value.errors) == 3
    config = SolverConfig.for_noise(400, 0.01, expected_targets=3)
    assert config.max_sparsity == 6
    assert config.residual_tol == pytest.approx(1.1 * np.sqrt(4.0))
    assert config.with_changes(max_iters=7).max_iters == 7
    assert config.to_dict()["rvm_hyper"] == [1e-6] * 4


def test_nmse_definitions():
    truth = np.array([2.0, 0.0, 1.0j, 0.0])
    assert nmse(truth, 3 * truth, [0, 2]) == (0.0, 0.0)
    total, target = nmse(truth, np.zeros(4), [0])
    assert total == pytest.approx(np.sqrt(1.25))
    assert target == pytest.approx(1.0)
    total, target = nmse(truth, np.array([2.0, 0.2, 1.0j, 0.0]), [0, 2])
    assert total == pytest.approx(0.1)
    assert target == 0.0
    with pytest.raises(UndefinedMetricError):
        nmse(np.zeros(4), truth, [0])
    with pytest.raises(ConfigurationError):
        nmse(truth, truth[:3], [0])


def test_solvers_agree_on_noiseless_support(random_problem):
    matrix, truth, data = random_problem
    weight = 2e-3 * np.max(np.abs(matrix.conj().T @ data))
    images = {
        "omp": omp(matrix, data, SolverConfig(max_sparsity=5)),
        "block_omp": block_omp(matrix, data, SolverConfig(max_sparsity=5)),
        "l1_map": l1_map(matrix, data, SolverConfig(max_sparsity=5, l1_weight=weight, max_iters=3000)),
        "bcs_rvm": bcs_rvm(matrix, data, SolverConfig(max_iters=1000)),
    }
    for name, image in images.items():
        magnitude = np.abs(image.coefficients)
        assert set(np.flatnonzero(magnitude > 1e-2 * magnitude.max())) == set(TRUE_COLUMNS), name
        assert_allclose(image.coefficients, truth, atol=1e-4, err_msg=name)
    assert images["block_omp"].block_size == 1
    assert images["omp"].indices == images["block_omp"].indices


def test_l1_objective_never_increases(random_problem):
    matrix, _, data = random_problem
    weight = 0.05 * np.max(np.abs(matrix.conj().T @ data))
    config = SolverConfig(l1_weight=weight, max_iters=200)
    objective = np.asarray(l1_map(matrix, data, config).diagnostics["objective"])
    assert objective.size > 9
    assert np.all(np.diff(objective) <= 1e-10 * objective[0])
    assert objective[-1] < objective[0]
    for iterations in (1, 2, 4, 8):
        short = l1_map(matrix, data, config.with_changes(max_iters=iterations)).diagnostics["objective"]
        assert len(short) == iterations + 1
        assert short[-1] == pytest.approx(objective[iterations], rel=1e-12)
