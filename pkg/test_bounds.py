"""Fisher information, CRLB/BCRLB and contour evaluation."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from displaced_radar.analytics.bounds import (
    BOUND_PANELS,
    BoundOptions,
    MeasurementNoise,
    PriorSpec,
    bound_contour,
    cp_bcrlb,
    cp_fisher,
    evaluate_bound,
    ncp_bcrlb,
    ncp_fisher,
    panel_contour,
    pcf_bcrlb,
    pcf_jacobian,
    point_cloud_noise_from_raw,
    steering_gradient,
)
from displaced_radar.analytics.linalg import schur_complement, symmetric_inverse
from displaced_radar.errors import ConditioningError, ConfigurationError
from displaced_radar.execution.parallel_executor import ParallelExecutor
from displaced_radar.orchestration.scenarios import bounds_noise, bounds_prior, bounds_scene
from displaced_radar.simulation.scene import Scene, azimuth_elevation, make_radar
from displaced_radar.simulation.signal import steering_vector


@pytest.fixture
def layout():
    return bounds_scene(), bounds_noise(), bounds_prior(n_mc=8)


def test_pcf_jacobian_matches_finite_difference(static_scene):
    p = np.array([3.0, 14.0, 1.5])
    jacobian = pcf_jacobian(static_scene, p)

    def measurements(point):
        values = []
        for radar in static_scene.radars:
            azimuth, elevation = azimuth_elevation(radar.origin, point)
            values += [np.linalg.norm(point - radar.origin), azimuth, elevation]
        return np.asarray(values)

    for axis in range(3):
        step = np.zeros(3)
        step[axis] = 1e-6
        numeric = (measurements(p + step) - measurements(p - step)) / 2e-6
        assert_allclose(jacobian[:, axis], numeric, rtol=1e-5, atol=1e-8)


def test_steering_gradient_matches_finite_difference(static_scene, rng):
    for _ in range(3):
        p = np.array([rng.uniform(-3, 3), rng.uniform(10, 25), 0.0])
        gradients = steering_gradient(static_scene, p)
        for axis in range(2):
            step = np.zeros(3)
            step[axis] = 1e-7
            numeric = (steering_vector(static_scene, p + step) - steering_vector(static_scene, p - step)) / 2e-7
            scale = np.max(np.abs(numeric))
            assert_allclose(gradients[axis], numeric, rtol=1e-4, atol=1e-4 * scale)


def test_symmetric_inverse_and_floor():
    matrix = np.array([[4.0, 1.0], [1.0, 3.0]])
    assert_allclose(symmetric_inverse(matrix) @ matrix, np.eye(2), atol=1e-12)
    with pytest.raises(ConditioningError) as info:
        symmetric_inverse(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert info.value.eigenvalues is not None


def test_schur_complement_of_block_diagonal_keeps_leading_block():
    matrix = np.diag([2.0, 3.0, 5.0, 7.0])
    assert_allclose(schur_complement(matrix, 2), np.diag([2.0, 3.0]))
    coupled = np.array([[2.0, 1.0], [1.0, 4.0]])
    assert schur_complement(coupled, 1)[0, 0] == pytest.approx(2.0 - 1.0 / 4.0)


def test_single_sensor_coherent_and_noncoherent_information_agree(layout):
    scene, noise, _ = layout
    single = scene.subset([1])
    alpha = 0.7 * np.exp(0.4j)
    p = (4.0, 30.0, 0.0)
    ncp = ncp_fisher(single, noise.subset([1]), p, [alpha], dims=2)
    cp = cp_fisher(single, noise.subset([1]), p, alpha, dims=2, options=BoundOptions(coherent_position_scale="conditional"))
    assert_allclose(ncp, cp, rtol=1e-10)


def test_bound_ordering_at_a_cell(layout):
    scene, noise, prior = layout
    prior = prior.moved_to((5.0, 40.0, 0.0))
    alphas = np.ones(3)
    cp_crlb = cp_bcrlb(scene, noise, prior, 1.0, bayesian=False).avg_position_bound
    ncp_crlb = ncp_bcrlb(scene, noise, prior, alphas, bayesian=False).avg_position_bound
    pcf_q3 = pcf_bcrlb(scene, noise, prior, bayesian=False).avg_position_bound
    pcf_q1 = pcf_bcrlb(scene.subset([0]), noise.subset([0]), prior, bayesian=False).avg_position_bound
    assert cp_crlb <= ncp_crlb
    assert pcf_q3 <= pcf_q1
    for mode in ("pcf", "ncp", "cp"):
        crlb = evaluate_bound(mode, scene, noise, prior, bayesian=False).avg_position_bound
        bcrlb = evaluate_bound(mode, scene, noise, prior, bayesian=True).avg_position_bound
        assert bcrlb <= crlb


def test_planar_scene_uses_two_position_dimensions(layout):
    scene, noise, prior = layout
    result = pcf_bcrlb(scene, noise, prior)
    assert result.position_dims == 2
    assert result.bound.shape == (2, 2)
    forced = pcf_bcrlb(scene, MeasurementNoise.from_std(3, 0.06, 0.02, 0.02), prior, options=BoundOptions(position_dims=3))
    assert forced.bound.shape == (3, 3)


def test_raw_bound_scales_with_variance_and_chirps(layout):
    scene, _, prior = layout
    base = ncp_bcrlb(scene, MeasurementNoise(raw_variance=1e3), prior, np.ones(3), bayesian=False)
    noisier = ncp_bcrlb(scene, MeasurementNoise(raw_variance=4e3), prior, np.ones(3), bayesian=False)
    assert noisier.avg_position_bound == pytest.approx(4 * base.avg_position_bound, rel=1e-8)

    doubled = Scene(radars=tuple(
        make_radar(r.origin, bandwidth_hz=r.bandwidth_hz, chirp_s=r.chirp_s, fs_hz=r.fs_hz, pri_s=r.pri_s, n_chirps=256)
        for r in scene.radars
    ))
    more = ncp_bcrlb(doubled, MeasurementNoise(raw_variance=1e3), prior, np.ones(3), bayesian=False)
    assert more.avg_position_bound == pytest.approx(base.avg_position_bound / 2, rel=1e-8)


def test_point_cloud_noise_from_raw_scales_with_sqrt_variance(layout):
    scene, _, _ = layout
    range_std, azimuth_std = point_cloud_noise_from_raw(scene, 1e3, (0.0, 50.0, 0.0))
    assert range_std.shape == azimuth_std.shape == (3,)
    assert np.all(range_std > 0) and np.all(azimuth_std > 0)
    range_4x, azimuth_4x = point_cloud_noise_from_raw(scene, 4e3, (0.0, 50.0, 0.0))
    assert_allclose(range_4x, 2 * range_std, rtol=1e-8)
    assert_allclose(azimuth_4x, 2 * azimuth_std, rtol=1e-8)


def test_contour_is_mirror_symmetric_about_array_centre(layout):
    scene, noise, prior = layout
    contour = bound_contour(scene, noise, prior, [-4.0, 1.0, 6.0], [20.0, 40.0], "pcf", bayesian=False)
    assert contour.values.shape == (2, 3)
    assert contour.n_flagged == 0
    assert_allclose(contour.values[:, 0], contour.values[:, 2], rtol=1e-9)


def test_contour_flags_cells_on_a_radar(layout):
    scene, noise, prior = layout
    contour = bound_contour(
        scene, noise, prior, [0.0, 10.0], [0.0, 30.0], "pcf", bayesian=False, executor=ParallelExecutor(max_workers=2)
    )
    assert contour.flagged[0, 0]
    assert np.isnan(contour.values[0, 0])
    assert np.isfinite(contour.values[1, 1])


def test_contour_rejects_unknown_mode(layout):
    scene, noise, prior = layout
    with pytest.raises(ConfigurationError, match="valid modes"):
        bound_contour(scene, noise, prior, [0.0], [10.0], "fused")


def test_single_sensor_panel_matches_subset_bound(layout):
    scene, noise, prior = layout
    panel = next(p for p in BOUND_PANELS if p.name == "pcf_crlb_q1")
    contour = panel_contour(panel, scene, noise, prior, [3.0], [25.0])
    expected = pcf_bcrlb(scene.subset([0]), noise.subset([0]), prior.moved_to((3.0, 25.0, 0.0)), bayesian=False)
    assert contour.values[0, 0] == pytest.approx(expected.avg_position_bound)


def test_prior_validation():
    with pytest.raises(ConfigurationError):
        PriorSpec(mean=(0, 0, 0), covariance=np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(ConfigurationError):
        PriorSpec.isotropic((0, 0, 0), 0.1, n_mc=0)
    draws = PriorSpec.isotropic((1.0, 2.0, 0.0), 0.1, n_mc=5, seed=3).draws(2)
    assert draws.shape == (5, 3)
    assert np.all(draws[:, 2] == 0.0)


def _fisher_reference(scene, p, jacobian_of, variances):
    """2 Re(J^H W J) with J built from central differences of the stacked steering vector."""
    h = steering_vector(scene, p)
    derivatives = []
    for axis in range(2):
        step = np.zeros(3)
        step[axis] = 1e-7
        derivatives.append((steering_vector(scene, p + step) - steering_vector(scene, p - step)) / 2e-7)
    weights = np.concatenate([np.full(scene.samples_per_sensor, 1.0 / v) for v in variances])
    jacobian = jacobian_of(h, derivatives)
    return 2.0 * np.real(jacobian.conj().T @ (weights[:, None] * jacobian))


def _assert_fisher_close(actual, reference):
    scale = 1.0 / np.sqrt(np.diag(reference))
    assert_allclose(actual * np.outer(scale, scale), reference * np.outer(scale, scale), atol=1e-5)


def test_ncp_fisher_matches_finite_difference_reference(static_scene):
    p = np.array([1.5, 14.0, 0.0])
    alphas = np.array([1.0, 0.6 - 0.3j, -0.4 + 0.9j])
    variances = (0.5, 1.0, 2.0)

    def jacobian_of(h, derivatives):
        jacobian = np.zeros((h.size, 8), dtype=complex)
        for q, alpha in enumerate(alphas):
            rows = static_scene.sensor_rows(q)
            jacobian[rows, 0] = alpha * derivatives[0][rows]
            jacobian[rows, 1] = alpha * derivatives[1][rows]
            jacobian[rows, 2 + q] = h[rows]
            jacobian[rows, 5 + q] = 1j * h[rows]
        return jacobian

    reference = _fisher_reference(static_scene, p, jacobian_of, variances)
    fisher = ncp_fisher(static_scene, MeasurementNoise(raw_variance=np.asarray(variances)), p, alphas, dims=2)
    _assert_fisher_close(fisher, reference)


def test_cp_fisher_matches_finite_difference_reference(static_scene):
    p = np.array([-2.0, 17.0, 0.0])
    alpha = 0.8 * np.exp(-1.1j)
    variances = (0.5, 1.0, 2.0)

    def jacobian_of(h, derivatives):
        return np.stack([alpha * derivatives[0], alpha * derivatives[1], h, 1j * h], axis=1)

    reference = _fisher_reference(static_scene, p, jacobian_of, variances)
    options = BoundOptions(coherent_position_scale="conditional")
    fisher = cp_fisher(static_scene, MeasurementNoise(raw_variance=np.asarray(variances)), p, alpha, dims=2, options=options)
    _assert_fisher_close(fisher, reference)


def test_bounds_are_loewner_ordered(layout):
    scene, noise, _ = layout
    prior = PriorSpec.isotropic((5.0, 40.0, 0.0), 1e-4, n_mc=8)
    for mode in ("pcf", "ncp", "cp"):
        crlb = evaluate_bound(mode, scene, noise, prior, bayesian=False).bound
        bcrlb = evaluate_bound(mode, scene, noise, prior, bayesian=True).bound
        assert np.linalg.eigvalsh(crlb - bcrlb).min() >= -1e-9 * np.abs(crlb).max(), mode
    cp = cp_bcrlb(scene, noise, prior, 1.0, bayesian=False)
    ncp = ncp_bcrlb(scene, noise, prior, np.ones(3), bayesian=False)
    assert np.linalg.eigvalsh(cp.fim - ncp.fim).min() >= -1e-9 * np.abs(ncp.fim).max()
    assert np.linalg.eigvalsh(ncp.bound - cp.bound).min() >= -1e-9 * np.abs(ncp.bound).max()
