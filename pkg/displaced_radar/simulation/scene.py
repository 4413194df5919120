"""Scene geometry: radar placement, MIMO element layout, targets and ego motion.

All positions are 3-D metres in a common vehicle frame. Indices follow the
canonical stacking order of measurement vectors: sensor ``q``, receiver
``m``, transmitter ``n``, chirp ``k`` and fast-time sample ``n_s``, all
zero-based.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from displaced_radar.errors import ConfigurationError, DegenerateGeometryError, GeometryIndexError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 3e8
_GEOMETRY_EPS = 1e-12


def as_points(values: Sequence, name: str) -> np.ndarray:
    array = np.atleast_2d(np.asarray(values, dtype=float))
    if array.ndim != 2 or array.shape[1] != 3:
        raise ConfigurationError(f"{name} must be a list of 3-vectors, got shape {array.shape}")
    return array


def as_vector(values: Sequence, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.shape != (3,):
        raise ConfigurationError(f"{name} must be a 3-vector, got shape {array.shape}")
    return array


@dataclass(frozen=True, eq=False)
class RadarUnit:
    """One FMCW MIMO radar sensor mounted on the vehicle."""

    origin: np.ndarray
    tx_offsets: np.ndarray
    rx_offsets: np.ndarray
    carrier_hz: float = 77e9
    bandwidth_hz: float = 500e6
    chirp_s: float = 5e-6
    pri_s: float = 30e-6
    fs_hz: float = 30e6
    n_chirps: int = 10
    sync_offset_s: float = 0.0
    position_error: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        """Normalise arrays and validate the waveform."""
        object.__setattr__(self, "origin", as_vector(self.origin, "origin"))
        object.__setattr__(self, "tx_offsets", as_points(self.tx_offsets, "tx_offsets"))
        object.__setattr__(self, "rx_offsets", as_points(self.rx_offsets, "rx_offsets"))
        object.__setattr__(self, "position_error", as_vector(self.position_error, "position_error"))

        if self.carrier_hz <= 0:
            raise ConfigurationError("carrier_hz must be > 0")
        if self.bandwidth_hz <= 0:
            raise ConfigurationError("bandwidth_hz must be > 0")
        if self.chirp_s <= 0 or self.fs_hz <= 0:
            raise ConfigurationError("chirp_s and fs_hz must be > 0")
        if self.chirp_s > self.pri_s:
            raise ConfigurationError("chirp_s must not exceed pri_s")
        if self.fs_hz * self.chirp_s < 1:
            raise ConfigurationError("fs_hz * chirp_s must be >= 1 (at least one fast-time sample)")
        if self.n_chirps < 1:
            raise ConfigurationError("n_chirps must be >= 1")

    @property
    def n_tx(self) -> int:
        return self.tx_offsets.shape[0]

    @property
    def n_rx(self) -> int:
        return self.rx_offsets.shape[0]

    @property
    def n_samples(self) -> int:
        """Fast-time samples per chirp, floor(fs * T_p)."""
        return int(math.floor(self.fs_hz * self.chirp_s + 1e-9))

    @property
    def chirp_slope(self) -> float:
        """Frequency sweep rate B_r in Hz/s."""
        return self.bandwidth_hz / self.chirp_s

    @property
    def sample_period_s(self) -> float:
        return 1.0 / self.fs_hz

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)

    @property
    def tx_positions(self) -> np.ndarray:
        return self.origin + self.tx_offsets

    @property
    def rx_positions(self) -> np.ndarray:
        return self.origin + self.rx_offsets

    def fast_time(self) -> np.ndarray:
        """Fast-time sample instants n_s * T_s."""
        return np.arange(self.n_samples) / self.fs_hz

    def with_offset(self, sync_offset_s: float) -> "RadarUnit":
        return replace(self, sync_offset_s=float(sync_offset_s))


@dataclass(frozen=True, eq=False)
class Target:
    """Static point scatterer with one reflectivity per sensor."""

    position: np.ndarray
    reflectivity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", as_vector(self.position, "target position"))
        object.__setattr__(self, "reflectivity", np.asarray(self.reflectivity, dtype=complex).reshape(-1))

    @classmethod
    def common(cls, position: Sequence[float], amplitude: complex, n_radars: int) -> "Target":
        """Target with the same reflectivity seen by every sensor."""
        return cls(position=np.asarray(position, dtype=float), reflectivity=np.full(n_radars, amplitude, dtype=complex))

    @property
    def has_common_reflectivity(self) -> bool:
        return bool(np.all(self.reflectivity == self.reflectivity[0]))


@dataclass(frozen=True, eq=False)
class Scene:
    """Radars, targets and ego velocity; the ground truth for simulation."""

    radars: Tuple[RadarUnit, ...]
    targets: Tuple[Target, ...] = ()
    ego_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "radars", tuple(self.radars))
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "ego_velocity", as_vector(self.ego_velocity, "ego_velocity"))

        if not self.radars:
            raise ConfigurationError("scene needs at least one radar")
        reference = self.radars[0]
        for q, radar in enumerate(self.radars[1:], start=1):
            if (radar.n_chirps, radar.n_samples, radar.n_tx, radar.n_rx) != (
                reference.n_chirps, reference.n_samples, reference.n_tx, reference.n_rx
            ):
                raise ConfigurationError(
                    f"radar {q} frame structure (K, N_s, N, M) differs from radar 0; "
                    "all radars share one TDM frame"
                )
            if not (math.isclose(radar.chirp_s, reference.chirp_s) and math.isclose(radar.pri_s, reference.pri_s)
                    and math.isclose(radar.fs_hz, reference.fs_hz)):
                raise ConfigurationError(f"radar {q} chirp_s/pri_s/fs_hz differ from radar 0")
        for index, target in enumerate(self.targets):
            if target.reflectivity.shape[0] != len(self.radars):
                raise ConfigurationError(
                    f"target {index} has {target.reflectivity.shape[0]} reflectivities, expected {len(self.radars)}"
                )

    @property
    def n_radars(self) -> int:
        return len(self.radars)

    @property
    def dims(self) -> Tuple[int, int, int, int, int]:
        """Cube dimensions (Q, M, N, K, N_s)."""
        radar = self.radars[0]
        return (self.n_radars, radar.n_rx, radar.n_tx, radar.n_chirps, radar.n_samples)

    @property
    def samples_per_sensor(self) -> int:
        _, m, n, k, n_s = self.dims
        return m * n * k * n_s

    @property
    def measurement_length(self) -> int:
        return self.n_radars * self.samples_per_sensor

    @property
    def is_planar(self) -> bool:
        """True when every element and target lies in the z = 0 plane."""
        z_values = [np.concatenate([r.tx_positions[:, 2], r.rx_positions[:, 2]]) for r in self.radars]
        z_values += [np.array([t.position[2]]) for t in self.targets]
        return bool(np.all(np.abs(np.concatenate(z_values)) < _GEOMETRY_EPS))

    def sensor_rows(self, q: int) -> slice:
        """Slice of the stacked measurement vector that belongs to sensor q."""
        check_sensor(self, q)
        size = self.samples_per_sensor
        return slice(q * size, (q + 1) * size)

    def subset(self, sensors: Sequence[int]) -> "Scene":
        """Scene restricted to the listed sensors (targets keep matching reflectivities)."""
        for q in sensors:
            check_sensor(self, q)
        radars = tuple(self.radars[q] for q in sensors)
        targets = tuple(Target(t.position, t.reflectivity[list(sensors)]) for t in self.targets)
        return Scene(radars=radars, targets=targets, ego_velocity=self.ego_velocity)

    def with_targets(self, targets: Sequence[Target]) -> "Scene":
        return Scene(radars=self.radars, targets=tuple(targets), ego_velocity=self.ego_velocity)

    def with_velocity(self, velocity: Sequence[float]) -> "Scene":
        return Scene(radars=self.radars, targets=self.targets, ego_velocity=np.asarray(velocity, dtype=float))

    def with_offsets(self, offsets_s: Sequence[float]) -> "Scene":
        if len(offsets_s) != self.n_radars:
            raise ConfigurationError(f"expected {self.n_radars} sync offsets, got {len(offsets_s)}")
        radars = tuple(r.with_offset(o) for r, o in zip(self.radars, offsets_s))
        return Scene(radars=radars, targets=self.targets, ego_velocity=self.ego_velocity)

    @property
    def sync_offsets(self) -> np.ndarray:
        return np.array([r.sync_offset_s for r in self.radars])


def uniform_mimo_offsets(
    n_tx: int,
    n_rx: int,
    wavelength: float,
    *,
    tx_spacing_wl: float = 2.0,
    rx_spacing_wl: float = 0.5,
) -> Tuple[np.ndarray, np.ndarray]:
    """Linear Tx and Rx arrays along x, each centred on the radar origin.

    With the defaults (Tx at 2 wavelengths, Rx at half a wavelength and
    ``n_tx * rx_spacing == tx_spacing``) the virtual array is a filled
    half-wavelength line symmetric about the origin.
    """
    if n_tx < 1 or n_rx < 1:
        raise ConfigurationError("n_tx and n_rx must be >= 1")
    tx = np.zeros((n_tx, 3))
    rx = np.zeros((n_rx, 3))
    tx[:, 0] = (np.arange(n_tx) - (n_tx - 1) / 2.0) * tx_spacing_wl * wavelength
    rx[:, 0] = (np.arange(n_rx) - (n_rx - 1) / 2.0) * rx_spacing_wl * wavelength
    return tx, rx


def check_sensor(scene: Scene, q: int) -> RadarUnit:
    if not 0 <= q < scene.n_radars:
        raise GeometryIndexError(f"sensor index {q} outside [0, {scene.n_radars})")
    return scene.radars[q]


def _check_element(radar: RadarUnit, m: int, n: int) -> None:
    if not 0 <= m < radar.n_rx:
        raise GeometryIndexError(f"rx index {m} outside [0, {radar.n_rx})")
    if not 0 <= n < radar.n_tx:
        raise GeometryIndexError(f"tx index {n} outside [0, {radar.n_tx})")


def _distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a - b
    return np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2])


def bistatic_range(scene: Scene, q: int, m: int, n: int, p: Sequence[float]) -> float:
    """Tx-to-target plus target-to-Rx path length; position_error is neglected."""
    radar = check_sensor(scene, q)
    _check_element(radar, m, n)
    point = as_vector(p, "p")
    return float(_distance(point, radar.tx_positions[n]) + _distance(point, radar.rx_positions[m]))


def bistatic_ranges(radar: RadarUnit, points: np.ndarray) -> np.ndarray:
    """Bistatic ranges for many points, shape (P, M, N)."""
    pts = as_points(points, "points")[:, None, None, :]
    rx = radar.rx_positions[None, :, None, :]
    tx = radar.tx_positions[None, None, :, :]
    return _distance(pts, tx) + _distance(pts, rx)


def range_gradients(radar: RadarUnit, points: np.ndarray) -> np.ndarray:
    """Gradient of the bistatic range with respect to the point, shape (P, M, N, 3)."""
    pts = as_points(points, "points")
    to_tx = pts[:, None, :] - radar.tx_positions[None, :, :]
    to_rx = pts[:, None, :] - radar.rx_positions[None, :, :]
    d_tx = _distance(pts[:, None, :], radar.tx_positions[None, :, :])
    d_rx = _distance(pts[:, None, :], radar.rx_positions[None, :, :])
    if np.any(d_tx < _GEOMETRY_EPS) or np.any(d_rx < _GEOMETRY_EPS):
        raise DegenerateGeometryError("point coincides with an antenna element")
    unit_tx = to_tx / d_tx[..., None]
    unit_rx = to_rx / d_rx[..., None]
    return unit_rx[:, :, None, :] + unit_tx[:, None, :, :]


def line_of_sight(radar: RadarUnit, points: np.ndarray, velocity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unit vectors from the radar origin to each point and the projected ego speed."""
    pts = as_points(points, "points")
    diff = pts - radar.origin
    dist = _distance(pts, radar.origin)
    if np.any(dist < _GEOMETRY_EPS):
        raise DegenerateGeometryError("point coincides with the radar origin")
    unit = diff / dist[:, None]
    return unit, unit @ np.asarray(velocity, dtype=float)


def direction_and_doppler(scene: Scene, q: int, p: Sequence[float]) -> Tuple[np.ndarray, float]:
    """Unit line-of-sight vector and v_q = v . u (positive when closing)."""
    radar = check_sensor(scene, q)
    unit, speed = line_of_sight(radar, as_vector(p, "p")[None, :], scene.ego_velocity)
    return unit[0], float(speed[0])


def azimuth_elevation(radar_origin: Sequence[float], p: Sequence[float]) -> Tuple[float, float]:
    """Azimuth atan2(dy, dx) and elevation atan(dz / ground range), radians."""
    diff = as_vector(p, "p") - as_vector(radar_origin, "radar_origin")
    ground = math.hypot(diff[0], diff[1])
    if ground < _GEOMETRY_EPS:
        raise DegenerateGeometryError("azimuth undefined: point above or at the radar origin")
    return math.atan2(diff[1], diff[0]), math.atan(diff[2] / ground)


def neglected_range_error(scene: Scene, q: int, m: int, n: int, p: Sequence[float]) -> float:
    """Exact bistatic range with the mounting error applied, minus the modelled range."""
    radar = check_sensor(scene, q)
    _check_element(radar, m, n)
    point = as_vector(p, "p")
    shifted_tx = radar.tx_positions[n] + radar.position_error
    shifted_rx = radar.rx_positions[m] + radar.position_error
    exact = float(_distance(point, shifted_tx) + _distance(point, shifted_rx))
    return exact - bistatic_range(scene, q, m, n, point)


def make_radar(
    origin: Sequence[float],
    *,
    n_tx: int = 2,
    n_rx: int = 4,
    carrier_hz: float = 77e9,
    tx_spacing_wl: float = 2.0,
    rx_spacing_wl: float = 0.5,
    **waveform,
) -> RadarUnit:
    """Radar with a centred uniform MIMO layout; ``waveform`` feeds RadarUnit fields."""
    tx, rx = uniform_mimo_offsets(
        n_tx, n_rx, SPEED_OF_LIGHT / carrier_hz, tx_spacing_wl=tx_spacing_wl, rx_spacing_wl=rx_spacing_wl
    )
    return RadarUnit(origin=np.asarray(origin, dtype=float), tx_offsets=tx, rx_offsets=rx, carrier_hz=carrier_hz, **waveform)


def describe(scene: Scene, name: Optional[str] = None) -> str:
    """One-line summary used in log messages."""
    q, m, n, k, n_s = scene.dims
    label = f"{name}: " if name else ""
    return f"{label}Q={q} M={m} N={n} K={k} N_s={n_s} targets={len(scene.targets)} v={scene.ego_velocity.tolist()}"
