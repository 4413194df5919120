"""Baseband synthesis for the displaced-sensor TDM MIMO FMCW model.

The dechirped sample of sensor ``q``, receiver ``m``, transmitter ``n``,
chirp ``k`` and fast-time index ``n_s`` for a static point at ``p`` is

    h = exp(-j2π f_c g / c)
        * exp(-j2π (2 f_c v_q / c + B_r g / c) n_s T_s)
        * exp(-j2π (2 f_c v_q T_r / c) (n + k N))

with ``g`` the bistatic range and ``v_q`` the ego speed projected on the
line of sight. A sensor whose clock lags by ``σ_q`` sees the extra phase
``c_q = exp(-j2π f_c 2 v_q σ_q / c)``.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from displaced_radar.errors import ConfigurationError, ContractViolationError, GeometryIndexError
from displaced_radar.simulation.scene import (
    SPEED_OF_LIGHT,
    RadarUnit,
    Scene,
    as_points,
    bistatic_range,
    bistatic_ranges,
    check_sensor,
    direction_and_doppler,
    line_of_sight,
)

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class BasebandCube:
    """Complex samples indexed (q, m, n, k, n_s)."""

    samples: np.ndarray
    sample_period_s: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 5:
            raise ConfigurationError(f"cube samples must be 5-D (Q, M, N, K, N_s), got {self.samples.shape}")

    @classmethod
    def zeros(cls, scene: Scene) -> "BasebandCube":
        return cls(np.zeros(scene.dims, dtype=complex), scene.radars[0].sample_period_s)

    @classmethod
    def from_vector(cls, vector: np.ndarray, dims: Sequence[int], sample_period_s: float) -> "BasebandCube":
        vector = np.asarray(vector, dtype=complex)
        if vector.size != int(np.prod(dims)):
            raise ConfigurationError(f"vector of length {vector.size} does not fit dims {tuple(dims)}")
        return cls(vector.reshape(tuple(dims)), sample_period_s)

    @property
    def dims(self) -> Tuple[int, int, int, int, int]:
        return tuple(self.samples.shape)  # type: ignore[return-value]

    def vector(self) -> np.ndarray:
        """Canonical stacked vector, q slowest and n_s fastest."""
        return self.samples.reshape(-1)

    def sensor_block(self, q: int) -> np.ndarray:
        if not 0 <= q < self.samples.shape[0]:
            raise GeometryIndexError(f"sensor index {q} outside [0, {self.samples.shape[0]})")
        return self.samples[q].reshape(-1)

    def __add__(self, other: "BasebandCube") -> "BasebandCube":
        if self.dims != other.dims:
            raise ConfigurationError(f"cannot add cubes with dims {self.dims} and {other.dims}")
        return BasebandCube(self.samples + other.samples, self.sample_period_s)


@dataclass(frozen=True)
class NoiseSpec:
    """Circular complex Gaussian noise, ``variance`` per complex sample."""

    variance: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.variance >= 0:
            raise ConfigurationError("noise variance must be >= 0")


def _check_time_indices(radar: RadarUnit, k: int, n_s: int) -> None:
    if not 0 <= k < radar.n_chirps:
        raise GeometryIndexError(f"chirp index {k} outside [0, {radar.n_chirps})")
    if not 0 <= n_s < radar.n_samples:
        raise GeometryIndexError(f"fast-time index {n_s} outside [0, {radar.n_samples})")


def steering_element(scene: Scene, q: int, m: int, n: int, k: int, n_s: int, p: Sequence[float]) -> complex:
    """Single noiseless unit-reflectivity sample for a point at ``p``."""
    radar = check_sensor(scene, q)
    _check_time_indices(radar, k, n_s)
    g = bistatic_range(scene, q, m, n, p)
    _, v_q = direction_and_doppler(scene, q, p)
    f_c = radar.carrier_hz
    t = n_s / radar.fs_hz
    carrier = cmath.exp(-2j * math.pi * f_c * g / SPEED_OF_LIGHT)
    fast = cmath.exp(-2j * math.pi * (2 * f_c * v_q / SPEED_OF_LIGHT + radar.chirp_slope * g / SPEED_OF_LIGHT) * t)
    slow = cmath.exp(-2j * math.pi * (2 * f_c * v_q * radar.pri_s / SPEED_OF_LIGHT) * (n + k * radar.n_tx))
    return carrier * fast * slow


def sensor_steering(radar: RadarUnit, points: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """Steering samples of one sensor for P points, shape (P, M, N, K, N_s)."""
    pts = as_points(points, "points")
    g = bistatic_ranges(radar, pts)
    _, v_q = line_of_sight(radar, pts, velocity)
    f_c = radar.carrier_hz
    c = SPEED_OF_LIGHT

    carrier_cycles = f_c * g / c
    beat_hz = (2 * f_c * v_q / c)[:, None, None] + radar.chirp_slope * g / c
    slots = np.arange(radar.n_tx)[:, None] + np.arange(radar.n_chirps)[None, :] * radar.n_tx
    doppler_cycles = (2 * f_c * v_q * radar.pri_s / c)[:, None, None] * slots[None, :, :]

    cycles = (
        carrier_cycles[:, :, :, None, None]
        + beat_hz[:, :, :, None, None] * radar.fast_time()[None, None, None, None, :]
        + doppler_cycles[:, None, :, :, None]
    )
    return np.exp(-2j * np.pi * np.mod(cycles, 1.0))


def steering_vector(scene: Scene, p: Sequence[float]) -> np.ndarray:
    """Stacked h(p) of length Q*M*N*K*N_s."""
    return steering_matrix(scene, np.asarray(p, dtype=float)[None, :])[:, 0]


def steering_matrix(scene: Scene, points: np.ndarray) -> np.ndarray:
    """Stacked steering vectors as columns, shape (Q*M*N*K*N_s, P)."""
    pts = as_points(points, "points")
    blocks = [
        sensor_steering(radar, pts, scene.ego_velocity).reshape(pts.shape[0], -1) for radar in scene.radars
    ]
    return np.concatenate(blocks, axis=1).T


def sync_phase(radar: RadarUnit, v_q: float) -> complex:
    """Phase term c_q produced by the sensor's clock offset at line-of-sight speed v_q."""
    return cmath.exp(-2j * math.pi * radar.carrier_hz * (2 * v_q / SPEED_OF_LIGHT) * radar.sync_offset_s)


def sync_phases(scene: Scene, points: np.ndarray, offsets_s: Sequence[float] | None = None) -> np.ndarray:
    """c_q for every point and sensor, shape (P, Q); offsets default to the scene's."""
    pts = as_points(points, "points")
    offsets = scene.sync_offsets if offsets_s is None else np.asarray(offsets_s, dtype=float)
    if offsets.shape != (scene.n_radars,):
        raise ConfigurationError(f"expected {scene.n_radars} offsets, got shape {offsets.shape}")
    phases = np.empty((pts.shape[0], scene.n_radars), dtype=complex)
    for q, radar in enumerate(scene.radars):
        _, v_q = line_of_sight(radar, pts, scene.ego_velocity)
        phases[:, q] = np.exp(-2j * np.pi * radar.carrier_hz * (2 * v_q / SPEED_OF_LIGHT) * offsets[q])
    return phases


def _synthesize(scene: Scene, noise: NoiseSpec) -> BasebandCube:
    cube = BasebandCube.zeros(scene)
    if scene.targets:
        positions = np.stack([t.position for t in scene.targets])
        reflectivity = np.stack([t.reflectivity for t in scene.targets])
        if reflectivity.shape[1] != scene.n_radars:
            raise ConfigurationError("target reflectivities do not match the number of radars")
        phases = sync_phases(scene, positions)
        for q, radar in enumerate(scene.radars):
            h = sensor_steering(radar, positions, scene.ego_velocity)
            cube.samples[q] = np.tensordot(reflectivity[:, q] * phases[:, q], h, axes=1)
    return add_noise(cube, noise)


def synthesize_noncoherent(scene: Scene, noise: NoiseSpec) -> BasebandCube:
    """Per-sensor reflectivities times sync phase times steering, plus noise."""
    logger.debug("Synthesising non-coherent cube: dims=%s targets=%d", scene.dims, len(scene.targets))
    return _synthesize(scene, noise)


def synthesize_coherent(scene: Scene, noise: NoiseSpec) -> BasebandCube:
    """Common-reflectivity synthesis; sync phases are still applied."""
    for index, target in enumerate(scene.targets):
        if not target.has_common_reflectivity:
            raise ContractViolationError(
                f"target {index} has unequal per-sensor reflectivities; coherent synthesis needs a common value"
            )
    return _synthesize(scene, noise)


def add_noise(cube: BasebandCube, spec: NoiseSpec) -> BasebandCube:
    """Add circular complex Gaussian noise using one RNG stream per (q, m, n, k)."""
    if spec.variance == 0:
        return BasebandCube(cube.samples.copy(), cube.sample_period_s)
    q_dim, m_dim, n_dim, k_dim, n_s = cube.dims
    scale = math.sqrt(spec.variance / 2.0)
    noisy = cube.samples.copy()
    for index in np.ndindex(q_dim, m_dim, n_dim, k_dim):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=index))
        draws = rng.standard_normal((n_s, 2))
        noisy[index] += scale * (draws[:, 0] + 1j * draws[:, 1])
    return BasebandCube(noisy, cube.sample_period_s)


def snr_to_variance(snr_db: float, signal_power: float) -> float:
    """Per-sample noise variance giving 10*log10(signal_power / variance) = snr_db."""
    if signal_power < 0:
        raise ConfigurationError("signal_power must be >= 0")
    return float(signal_power / 10.0 ** (snr_db / 10.0))


def signal_power(cube: BasebandCube) -> float:
    """Mean |sample|^2 over the cube."""
    return float(np.mean(np.abs(cube.samples) ** 2))
