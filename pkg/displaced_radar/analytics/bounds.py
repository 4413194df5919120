"""Fisher information and (Bayesian) Cramér-Rao bounds on target position.

Three processing modes are covered:

* point-cloud fusion (``pcf``): every sensor reports range, azimuth and
  elevation with Gaussian errors, fused in position space;
* non-coherent raw-data processing (``ncp``): one unknown complex
  reflectivity per sensor;
* coherent raw-data processing (``cp``): a single common reflectivity.

Raw-data bounds use the static signal model (platform and target at rest).
Because the K chirps of a static scene are identical, all inner products are
evaluated on one chirp and scaled by K. The Bayesian variants average the
likelihood information over draws from the Gaussian position prior, add the
prior information R_o^-1 and eliminate the reflectivities with a Schur
complement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from displaced_radar.analytics.linalg import DEFAULT_EIG_FLOOR, schur_complement, symmetric_inverse, symmetrize
from displaced_radar.errors import ConditioningError, ConfigurationError, DegenerateGeometryError
from displaced_radar.execution.parallel_executor import ParallelExecutor
from displaced_radar.simulation.scene import (
    SPEED_OF_LIGHT,
    RadarUnit,
    Scene,
    as_vector,
    bistatic_ranges,
    range_gradients,
)

logger = logging.getLogger(__name__)

BOUND_MODES = ("pcf", "ncp", "cp")
POSITION_SCALES = ("as_printed", "conditional")


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Gaussian position prior N(mean, covariance) and its Monte-Carlo budget."""

    mean: np.ndarray
    covariance: np.ndarray
    n_mc: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", as_vector(self.mean, "prior mean"))
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (3, 3):
            raise ConfigurationError(f"prior covariance must be 3x3, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=0.0):
            raise ConfigurationError("prior covariance must be symmetric")
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise ConfigurationError("prior covariance must be positive definite")
        object.__setattr__(self, "covariance", cov)
        if self.n_mc < 1:
            raise ConfigurationError("n_mc must be >= 1")

    @classmethod
    def isotropic(cls, mean: Sequence[float], std_m: float, n_mc: int = 20, seed: int = 0) -> "PriorSpec":
        return cls(mean=np.asarray(mean, dtype=float), covariance=np.eye(3) * std_m ** 2, n_mc=n_mc, seed=seed)

    def moved_to(self, mean: Sequence[float]) -> "PriorSpec":
        return replace(self, mean=np.asarray(mean, dtype=float))

    def draws(self, dims: int) -> np.ndarray:
        """Deterministic prior samples, shape (n_mc, 3); planar draws keep z at the mean."""
        rng = np.random.default_rng(self.seed)
        samples = np.tile(self.mean, (self.n_mc, 1))
        samples[:, :dims] = rng.multivariate_normal(
            self.mean[:dims], self.covariance[:dims, :dims], size=self.n_mc, method="cholesky"
        )
        return samples


@dataclass(frozen=True, eq=False)
class MeasurementNoise:
    """Point-cloud covariance over stacked (range, azimuth, elevation) and raw sample variance.

    ``point_cloud`` is (3Q, 3Q) in m^2 / rad^2; an infinite diagonal entry
    marks a measurement that carries no information. ``raw_variance`` is
    the complex per-sample variance, either one value or one per sensor.
    """

    point_cloud: Optional[np.ndarray] = None
    raw_variance: Union[float, np.ndarray] = 1.0

    def __post_init__(self):
        if self.point_cloud is not None:
            cov = np.asarray(self.point_cloud, dtype=float)
            if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 3:
                raise ConfigurationError(f"point_cloud covariance must be (3Q, 3Q), got {cov.shape}")
            if np.any(np.diag(cov) <= 0):
                raise ConfigurationError("point_cloud variances must be > 0")
            object.__setattr__(self, "point_cloud", cov)
        raw = np.asarray(self.raw_variance, dtype=float)
        if np.any(raw <= 0):
            raise ConfigurationError("raw_variance must be > 0")

    @classmethod
    def from_std(
        cls,
        n_radars: int,
        range_std: Union[float, Sequence[float]],
        azimuth_std: Union[float, Sequence[float]],
        elevation_std: Union[None, float, Sequence[float]] = None,
        raw_variance: Union[float, np.ndarray] = 1.0,
    ) -> "MeasurementNoise":
        """Diagonal point-cloud covariance from standard deviations (radians for angles)."""
        elevation = np.inf if elevation_std is None else elevation_std
        stds = np.stack([
            np.broadcast_to(np.asarray(range_std, dtype=float), (n_radars,)),
            np.broadcast_to(np.asarray(azimuth_std, dtype=float), (n_radars,)),
            np.broadcast_to(np.asarray(elevation, dtype=float), (n_radars,)),
        ], axis=1).reshape(-1)
        return cls(point_cloud=np.diag(stds ** 2), raw_variance=raw_variance)

    @property
    def n_sensors(self) -> Optional[int]:
        return None if self.point_cloud is None else self.point_cloud.shape[0] // 3

    def point_cloud_precision(self, rows: np.ndarray) -> np.ndarray:
        """Inverse covariance of the selected measurement rows."""
        if self.point_cloud is None:
            raise ConfigurationError("point-cloud bound requested without point_cloud covariance")
        cov = self.point_cloud[np.ix_(rows, rows)]
        off_diagonal = cov - np.diag(np.diag(cov))
        if not np.any(off_diagonal):
            with np.errstate(divide="ignore"):
                return np.diag(1.0 / np.diag(cov))
        return symmetric_inverse(cov)

    def subset(self, sensors: Sequence[int]) -> "MeasurementNoise":
        """Noise of the listed sensors only."""
        point_cloud = None
        if self.point_cloud is not None:
            rows = np.concatenate([np.arange(3 * q, 3 * q + 3) for q in sensors])
            point_cloud = self.point_cloud[np.ix_(rows, rows)]
        raw = np.asarray(self.raw_variance, dtype=float).reshape(-1)
        if raw.size > 1:
            raw = raw[list(sensors)]
        return MeasurementNoise(point_cloud=point_cloud, raw_variance=raw if raw.size > 1 else float(raw[0]))

    def raw_variances(self, n_radars: int) -> np.ndarray:
        raw = np.asarray(self.raw_variance, dtype=float).reshape(-1)
        if raw.size == 1:
            return np.full(n_radars, raw[0])
        if raw.size != n_radars:
            raise ConfigurationError(f"raw_variance has {raw.size} entries for {n_radars} sensors")
        return raw


@dataclass(frozen=True)
class BoundOptions:
    """Knobs shared by the raw-data bounds."""

    coherent_position_scale: str = "as_printed"
    alpha_variance: float = 1.0
    eig_floor: float = DEFAULT_EIG_FLOOR
    position_dims: Optional[int] = None

    def __post_init__(self):
        if self.coherent_position_scale not in POSITION_SCALES:
            raise ConfigurationError(
                f"coherent_position_scale must be one of {', '.join(POSITION_SCALES)}, "
                f"got {self.coherent_position_scale!r}"
            )
        if self.alpha_variance <= 0:
            raise ConfigurationError("alpha_variance must be > 0")
        if self.position_dims not in (None, 2, 3):
            raise ConfigurationError("position_dims must be 2, 3 or None")


@dataclass(eq=False)
class FimResult:
    """Effective position information, its inverse and the averaged x/y bound."""

    fim: np.ndarray
    bound: np.ndarray
    avg_position_bound: float
    full_fim: Optional[np.ndarray] = None
    position_dims: int = 3

    @property
    def position_std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.bound), 0.0, None))


@dataclass(eq=False)
class ContourResult:
    """Averaged position bound over a rectangular grid of prior means."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    flagged: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.flagged))


class BoundPanel(NamedTuple):
    """One contour panel of the bound study."""

    name: str
    mode: str
    sensors: Optional[Tuple[int, ...]]
    bayesian: bool


BOUND_PANELS: Tuple[BoundPanel, ...] = (
    BoundPanel("pcf_crlb_q3", "pcf", None, False),
    BoundPanel("pcf_bcrlb_q3", "pcf", None, True),
    BoundPanel("pcf_crlb_q1", "pcf", (0,), False),
    BoundPanel("ncp_crlb_q3", "ncp", None, False),
    BoundPanel("ncp_bcrlb_q3", "ncp", None, True),
    BoundPanel("cp_crlb_q3", "cp", None, False),
    BoundPanel("cp_bcrlb_q3", "cp", None, True),
)


def resolve_position_dims(scene: Scene, prior_mean: np.ndarray, options: BoundOptions) -> int:
    if options.position_dims is not None:
        return options.position_dims
    return 2 if scene.is_planar and abs(float(prior_mean[2])) < 1e-12 else 3


# -- point-cloud fusion -------------------------------------------------------

def pcf_jacobian(scene: Scene, p: Sequence[float]) -> np.ndarray:
    """Rows [dr_q; dθ_q; dφ_q] per sensor with respect to (x, y, z), shape (3Q, 3)."""
    point = as_vector(p, "p")
    rows = []
    for q, radar in enumerate(scene.radars):
        dx, dy, dz = point - radar.origin
        rho_sq = dx * dx + dy * dy
        rho = np.sqrt(rho_sq)
        r_sq = rho_sq + dz * dz
        if rho < 1e-12:
            raise DegenerateGeometryError(f"point {point.tolist()} lies on the vertical through radar {q}")
        r = np.sqrt(r_sq)
        rows.append([dx / r, dy / r, dz / r])
        rows.append([-dy / rho_sq, dx / rho_sq, 0.0])
        rows.append([-dz * dx / (rho * r_sq), -dz * dy / (rho * r_sq), rho / r_sq])
    return np.asarray(rows)


def pcf_fisher(scene: Scene, noise: MeasurementNoise, p: Sequence[float], dims: int = 3) -> np.ndarray:
    """Likelihood information g^T R_n^-1 g of the point-cloud model."""
    if noise.n_sensors != scene.n_radars:
        raise ConfigurationError(
            f"point-cloud noise covers {noise.n_sensors} sensors, scene has {scene.n_radars}"
        )
    jacobian = pcf_jacobian(scene, p)
    rows = np.arange(3 * scene.n_radars)
    if dims == 2:
        rows = rows[rows % 3 != 2]
    g = jacobian[rows, :dims]
    precision = noise.point_cloud_precision(rows)
    return symmetrize(g.T @ precision @ g)


# -- raw-data model ---------------------------------------------------------------

@dataclass(eq=False)
class _SensorInnerProducts:
    """K-scaled inner products of one sensor's static steering block and its gradient."""

    hh: float
    uh: np.ndarray
    uu: np.ndarray


def _static_response(radar: RadarUnit, point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Single-chirp static steering h (M, N, N_s) and gradient u (M, N, N_s, 3)."""
    pts = point[None, :]
    g = bistatic_ranges(radar, pts)[0]
    grad = range_gradients(radar, pts)[0]
    t = radar.fast_time()
    c = SPEED_OF_LIGHT
    cycles = radar.carrier_hz * g[:, :, None] / c + (radar.chirp_slope * g / c)[:, :, None] * t[None, None, :]
    h = np.exp(-2j * np.pi * np.mod(cycles, 1.0))
    phase_rate = -2j * np.pi * (radar.carrier_hz + radar.chirp_slope * t) / c
    u = (h * phase_rate)[..., None] * grad[:, :, None, :]
    return h, u


def steering_gradient(scene: Scene, p: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Derivatives of the stacked static steering vector with respect to x, y and z."""
    point = as_vector(p, "p")
    _, m_dim, n_dim, k_dim, n_s = scene.dims
    parts = []
    for radar in scene.radars:
        _, u = _static_response(radar, point)
        parts.append(np.broadcast_to(u[:, :, None, :, :], (m_dim, n_dim, k_dim, n_s, 3)).reshape(-1, 3))
    stacked = np.concatenate(parts, axis=0)
    return stacked[:, 0].copy(), stacked[:, 1].copy(), stacked[:, 2].copy()


def _inner_products(radar: RadarUnit, point: np.ndarray) -> _SensorInnerProducts:
    h, u = _static_response(radar, point)
    h_flat = h.reshape(-1)
    u_flat = u.reshape(-1, 3)
    k = radar.n_chirps
    return _SensorInnerProducts(
        hh=k * float(np.real(np.vdot(h_flat, h_flat))),
        uh=k * (u_flat.conj().T @ h_flat),
        uu=k * (u_flat.conj().T @ u_flat),
    )


def ncp_fisher(
    scene: Scene,
    noise: MeasurementNoise,
    p: Sequence[float],
    alphas: Sequence[complex],
    dims: int = 3,
) -> np.ndarray:
    """Likelihood information over (position, Re α_1..Q, Im α_1..Q)."""
    point = as_vector(p, "p")
    alphas = np.asarray(alphas, dtype=complex).reshape(-1)
    q_count = scene.n_radars
    if alphas.size != q_count:
        raise ConfigurationError(f"expected {q_count} reflectivities, got {alphas.size}")
    variances = noise.raw_variances(q_count)
    fim = np.zeros((dims + 2 * q_count, dims + 2 * q_count))
    for q, radar in enumerate(scene.radars):
        ip = _inner_products(radar, point)
        alpha = alphas[q]
        weight = 2.0 / variances[q]
        re_index, im_index = dims + q, dims + q_count + q
        fim[:dims, :dims] += weight * abs(alpha) ** 2 * np.real(ip.uu[:dims, :dims])
        fim[:dims, re_index] = weight * np.real(np.conj(alpha) * ip.uh[:dims])
        fim[:dims, im_index] = weight * np.imag(alpha * np.conj(ip.uh[:dims]))
        fim[re_index, re_index] = weight * ip.hh
        fim[im_index, im_index] = weight * ip.hh
    upper = np.triu(fim, 1)
    return np.triu(fim) + upper.T


def cp_fisher(
    scene: Scene,
    noise: MeasurementNoise,
    p: Sequence[float],
    alpha: complex,
    dims: int = 3,
    options: BoundOptions = BoundOptions(),
) -> np.ndarray:
    """Likelihood information over (position, Re α, Im α) for a common reflectivity."""
    point = as_vector(p, "p")
    variances = noise.raw_variances(scene.n_radars)
    hh = 0.0
    uh = np.zeros(3, dtype=complex)
    uu = np.zeros((3, 3), dtype=complex)
    for q, radar in enumerate(scene.radars):
        ip = _inner_products(radar, point)
        hh += ip.hh / variances[q]
        uh += ip.uh / variances[q]
        uu += ip.uu / variances[q]
    if options.coherent_position_scale == "as_printed":
        scale = options.alpha_variance
    else:
        scale = abs(alpha) ** 2
    fim = np.zeros((dims + 2, dims + 2))
    fim[:dims, :dims] = 2.0 * scale * np.real(uu[:dims, :dims])
    fim[:dims, dims] = 2.0 * np.real(np.conj(alpha) * uh[:dims])
    fim[:dims, dims + 1] = 2.0 * np.imag(alpha * np.conj(uh[:dims]))
    fim[dims, dims] = fim[dims + 1, dims + 1] = 2.0 * hh
    upper = np.triu(fim, 1)
    return np.triu(fim) + upper.T


# -- bounds -----------------------------------------------------------------------------

def _position_bound(
    fisher: Callable[[np.ndarray], np.ndarray],
    prior: PriorSpec,
    dims: int,
    bayesian: bool,
    options: BoundOptions,
) -> FimResult:
    if bayesian:
        draws = prior.draws(dims)
        likelihood = np.mean([fisher(point) for point in draws], axis=0)
    else:
        likelihood = fisher(prior.mean)
    full = likelihood.copy()
    if bayesian:
        full[:dims, :dims] += symmetric_inverse(prior.covariance[:dims, :dims], options.eig_floor)
    effective = schur_complement(full, dims, options.eig_floor)
    bound = symmetric_inverse(effective, options.eig_floor)
    return FimResult(
        fim=effective,
        bound=bound,
        avg_position_bound=float((bound[0, 0] + bound[1, 1]) / 2.0),
        full_fim=symmetrize(full),
        position_dims=dims,
    )


def pcf_bcrlb(
    scene: Scene,
    noise: MeasurementNoise,
    prior: PriorSpec,
    *,
    bayesian: bool = True,
    options: BoundOptions = BoundOptions(),
) -> FimResult:
    """Point-cloud fusion bound; ``bayesian=False`` gives the CRLB at the prior mean."""
    dims = resolve_position_dims(scene, prior.mean, options)
    return _position_bound(lambda point: pcf_fisher(scene, noise, point, dims), prior, dims, bayesian, options)


def ncp_bcrlb(
    scene: Scene,
    noise: MeasurementNoise,
    prior: PriorSpec,
    alphas: Sequence[complex],
    *,
    bayesian: bool = True,
    options: BoundOptions = BoundOptions(),
) -> FimResult:
    """Non-coherent raw-data bound with one nuisance reflectivity per sensor."""
    dims = resolve_position_dims(scene, prior.mean, options)
    return _position_bound(lambda point: ncp_fisher(scene, noise, point, alphas, dims), prior, dims, bayesian, options)


def cp_bcrlb(
    scene: Scene,
    noise: MeasurementNoise,
    prior: PriorSpec,
    alpha: complex,
    *,
    bayesian: bool = True,
    options: BoundOptions = BoundOptions(),
) -> FimResult:
    """Coherent raw-data bound with a single nuisance reflectivity."""
    dims = resolve_position_dims(scene, prior.mean, options)
    return _position_bound(
        lambda point: cp_fisher(scene, noise, point, alpha, dims, options), prior, dims, bayesian, options
    )


def evaluate_bound(
    mode: str,
    scene: Scene,
    noise: MeasurementNoise,
    prior: PriorSpec,
    *,
    bayesian: bool = True,
    alphas: Optional[Sequence[complex]] = None,
    options: BoundOptions = BoundOptions(),
) -> FimResult:
    """Dispatch to the bound of ``mode`` (one of pcf, ncp, cp)."""
    if mode not in BOUND_MODES:
        raise ConfigurationError(f"unknown bound mode {mode!r}; valid modes: {', '.join(BOUND_MODES)}")
    if alphas is None:
        alphas = np.ones(scene.n_radars, dtype=complex)
    if mode == "pcf":
        return pcf_bcrlb(scene, noise, prior, bayesian=bayesian, options=options)
    if mode == "ncp":
        return ncp_bcrlb(scene, noise, prior, alphas, bayesian=bayesian, options=options)
    return cp_bcrlb(scene, noise, prior, complex(np.asarray(alphas).reshape(-1)[0]), bayesian=bayesian, options=options)


def bound_contour(
    scene: Scene,
    noise: MeasurementNoise,
    prior_template: PriorSpec,
    grid_x: Sequence[float],
    grid_y: Sequence[float],
    mode: str,
    *,
    bayesian: bool = True,
    alphas: Optional[Sequence[complex]] = None,
    options: BoundOptions = BoundOptions(),
    executor: Optional[ParallelExecutor] = None,
) -> ContourResult:
    """Averaged position bound with the prior mean moved to every grid point.

    Cells whose information matrix fails the eigenvalue floor, or that sit on
    a radar, come back as NaN and are marked in ``flagged``.
    """
    if mode not in BOUND_MODES:
        raise ConfigurationError(f"unknown bound mode {mode!r}; valid modes: {', '.join(BOUND_MODES)}")
    xs = np.asarray(grid_x, dtype=float)
    ys = np.asarray(grid_y, dtype=float)
    z = float(prior_template.mean[2])

    def evaluate_row(y: float) -> Tuple[np.ndarray, np.ndarray]:
        values = np.full(xs.size, np.nan)
        flagged = np.zeros(xs.size, dtype=bool)
        for ix, x in enumerate(xs):
            prior = prior_template.moved_to((x, y, z))
            try:
                values[ix] = evaluate_bound(
                    mode, scene, noise, prior, bayesian=bayesian, alphas=alphas, options=options
                ).avg_position_bound
            except (ConditioningError, DegenerateGeometryError) as exc:
                flagged[ix] = True
                logger.debug("Bound cell (%.2f, %.2f) flagged: %s", x, y, exc)
        return values, flagged

    executor = executor or ParallelExecutor(max_workers=1)
    batch = executor.map(evaluate_row, list(ys), description=f"{mode} bound contour")
    values = np.full((ys.size, xs.size), np.nan)
    flagged = np.ones((ys.size, xs.size), dtype=bool)
    for iy, task in enumerate(batch.results):
        if task.success:
            values[iy], flagged[iy] = task.result
    if flagged.any():
        logger.warning("%s contour: %d of %d cells flagged", mode, int(flagged.sum()), flagged.size)
    return ContourResult(x=xs, y=ys, values=values, flagged=flagged)


def point_cloud_noise_from_raw(
    scene: Scene,
    raw_variance: Union[float, np.ndarray],
    p: Sequence[float],
    alpha: complex = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Range and azimuth standard deviations implied by each sensor's raw-data CRLB at ``p``.

    Returns arrays of length Q (metres, radians).
    """
    point = as_vector(p, "p")
    variances = MeasurementNoise(raw_variance=raw_variance).raw_variances(scene.n_radars)
    range_std = np.empty(scene.n_radars)
    azimuth_std = np.empty(scene.n_radars)
    for q in range(scene.n_radars):
        single = scene.subset([q])
        fisher = ncp_fisher(single, MeasurementNoise(raw_variance=variances[q]), point, [alpha], dims=2)
        position_cov = symmetric_inverse(schur_complement(fisher, 2))
        jacobian = pcf_jacobian(single, point)[:2, :2]
        polar_cov = jacobian @ position_cov @ jacobian.T
        range_std[q], azimuth_std[q] = np.sqrt(np.diag(polar_cov))
    return range_std, azimuth_std


def panel_contour(
    panel: BoundPanel,
    scene: Scene,
    noise: MeasurementNoise,
    prior_template: PriorSpec,
    grid_x: Sequence[float],
    grid_y: Sequence[float],
    *,
    alphas: Optional[Sequence[complex]] = None,
    options: BoundOptions = BoundOptions(),
    executor: Optional[ParallelExecutor] = None,
) -> ContourResult:
    """Contour of one named panel, restricted to the panel's sensors."""
    if panel.sensors is not None:
        scene = scene.subset(panel.sensors)
        noise = noise.subset(panel.sensors)
        if alphas is not None:
            alphas = np.asarray(alphas, dtype=complex).reshape(-1)[list(panel.sensors)]
    logger.info("Bound panel %s: mode=%s Q=%d bayesian=%s", panel.name, panel.mode, scene.n_radars, panel.bayesian)
    return bound_contour(
        scene, noise, prior_template, grid_x, grid_y, panel.mode,
        bayesian=panel.bayesian, alphas=alphas, options=options, executor=executor,
    )
