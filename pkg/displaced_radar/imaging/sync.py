"""Time-synchronisation estimation from a strong isolated anchor target.

A sensor whose clock lags the reference by σ_q sees every target multiplied
by c_q = exp(-j2π f_c 2 v_q σ_q / c). Comparing per-sensor amplitude
estimates of one anchor against the reference sensor therefore reveals σ_q,
provided the platform moves (v_q ≠ 0).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from displaced_radar.errors import ConfigurationError, NoAnchorError, ObservabilityError
from displaced_radar.imaging.dictionary import ImagingGrid
from displaced_radar.imaging.recovery import SparseImage
from displaced_radar.simulation.scene import SPEED_OF_LIGHT, Scene, as_points, line_of_sight
from displaced_radar.simulation.signal import BasebandCube, sensor_steering

logger = logging.getLogger(__name__)

AMPLITUDE_SOURCES = ("matched_filter", "image")
_MIN_SPEED = 1e-6
_WRAP_MARGIN = 1e-6


@dataclass
class SyncEstimate:
    """Per-sensor offset estimates; sensor 0 is the reference."""

    offsets_s: np.ndarray
    phases_rad: np.ndarray
    confidence: np.ndarray
    anchor_cells: List[int] = field(default_factory=list)
    anchor_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    max_unambiguous_offset_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ambiguous: List[bool] = field(default_factory=list)
    amplitude_source: str = "matched_filter"

    @property
    def n_sensors(self) -> int:
        return self.offsets_s.size

    def to_rows(self) -> List[Dict[str, float]]:
        """One machine-readable row per sensor."""
        return [
            {
                "sensor": q,
                "offset_s": float(self.offsets_s[q]),
                "phase_rad": float(self.phases_rad[q]),
                "confidence": float(self.confidence[q]),
                "max_unambiguous_offset_s": float(self.max_unambiguous_offset_s[q]),
                "ambiguous": bool(self.ambiguous[q]),
            }
            for q in range(self.n_sensors)
        ]

    def report(self) -> str:
        lines = [f"Synchronisation estimate ({self.amplitude_source} amplitudes)"]
        for position in self.anchor_positions:
            lines.append(f"  anchor at ({position[0]:.3f}, {position[1]:.3f}, {position[2]:.3f}) m")
        for row in self.to_rows():
            flag = "  AMBIGUOUS" if row["ambiguous"] else ""
            lines.append(
                f"  sensor {row['sensor']}: offset {row['offset_s'] * 1e6:+.6f} us, phase {row['phase_rad']:+.6f} rad, "
                f"confidence {row['confidence']:.4f}, |offset| limit {row['max_unambiguous_offset_s'] * 1e6:.3f} us{flag}"
            )
        return "\n".join(lines)


def select_anchor(image: SparseImage, grid: ImagingGrid, min_isolation_m: float, count: int = 1) -> List[int]:
    """Strongest cells, each at least ``min_isolation_m`` from every stronger detection.

    Cells rank by aggregate block magnitude sqrt(sum_q |b_q|^2); ties go to
    the lower cell index.
    """
    if count < 1:
        raise ConfigurationError("anchor count must be >= 1")
    if min_isolation_m < 0:
        raise ConfigurationError("min_isolation_m must be >= 0")
    magnitude = image.magnitude()
    if magnitude.size != grid.n_cells:
        raise ConfigurationError(f"image has {magnitude.size} cells, grid has {grid.n_cells}")
    detections = np.flatnonzero(magnitude > 0)
    if detections.size == 0:
        raise NoAnchorError("image is empty; no anchor candidate")
    ranked = detections[np.argsort(-magnitude[detections], kind="stable")]
    positions = grid.positions

    anchors: List[int] = []
    for rank, cell in enumerate(ranked):
        stronger = positions[ranked[:rank]]
        if rank and np.min(np.linalg.norm(stronger[:, :2] - positions[cell, :2], axis=1)) < min_isolation_m:
            continue
        anchors.append(int(cell))
        if len(anchors) == count:
            break
    if not anchors:
        raise NoAnchorError(f"no detection is isolated by {min_isolation_m} m")
    logger.info("Selected anchor cells %s (isolation %.2f m)", anchors, min_isolation_m)
    return anchors


def _measurement(scene: Scene, data: Union[BasebandCube, np.ndarray]) -> np.ndarray:
    vector = data.vector() if isinstance(data, BasebandCube) else np.asarray(data, dtype=complex).reshape(-1)
    if vector.size != scene.measurement_length:
        raise ConfigurationError(f"data length {vector.size} does not match scene length {scene.measurement_length}")
    return vector


def anchor_amplitudes(scene: Scene, data: Union[BasebandCube, np.ndarray], position: Sequence[float]) -> np.ndarray:
    """Matched-filter ML amplitudes α̂_q = h_q^H z_q / ||h_q||^2 at one position, shape (Q,)."""
    vector = _measurement(scene, data)
    point = as_points(position, "anchor position")
    amplitudes = np.empty(scene.n_radars, dtype=complex)
    for q, radar in enumerate(scene.radars):
        h = sensor_steering(radar, point, scene.ego_velocity).reshape(-1)
        amplitudes[q] = np.vdot(h, vector[scene.sensor_rows(q)]) / np.vdot(h, h).real
    return amplitudes


def _correlation(scene: Scene, vector: np.ndarray, position: np.ndarray) -> np.ndarray:
    values = np.empty(scene.n_radars)
    for q, radar in enumerate(scene.radars):
        h = sensor_steering(radar, position[None, :], scene.ego_velocity).reshape(-1)
        z = vector[scene.sensor_rows(q)]
        denominator = np.linalg.norm(h) * np.linalg.norm(z)
        values[q] = abs(np.vdot(h, z)) / denominator if denominator > 0 else 0.0
    return values


def estimate_offsets(
    scene: Scene,
    data: Union[BasebandCube, np.ndarray],
    anchors: Sequence,
    *,
    grid: Optional[ImagingGrid] = None,
    amplitude_source: str = "matched_filter",
    image: Optional[SparseImage] = None,
) -> SyncEstimate:
    """Estimate σ_q from the phase of α̂_q / α̂_1 at the anchor(s).

    Args:
        scene: Known geometry and ego velocity (offsets in it are ignored).
        data: Measured cube or stacked vector.
        anchors: Cell indices when ``grid`` is given, otherwise 3-D positions.
        grid: Grid the anchor cells refer to.
        amplitude_source: "matched_filter" fits each sensor at the anchor on its own;
            "image" takes the per-sensor block coefficients of ``image``.
        image: Block-structured image (block size Q) for the "image" source.

    Returns:
        SyncEstimate with the reference sensor pinned at zero.
    """
    if amplitude_source not in AMPLITUDE_SOURCES:
        raise ConfigurationError(f"amplitude_source must be one of {AMPLITUDE_SOURCES}, got {amplitude_source!r}")
    if not len(anchors):
        raise NoAnchorError("no anchor given")
    vector = _measurement(scene, data)
    if grid is not None:
        cells = [int(a) for a in anchors]
        positions = np.stack([grid.cell_position(cell) for cell in cells])
    else:
        cells = []
        positions = as_points(anchors, "anchors")

    if amplitude_source == "image":
        if image is None or grid is None:
            raise ConfigurationError("the image amplitude source needs both image and grid")
        if image.block_size != scene.n_radars:
            raise ConfigurationError(f"image block size {image.block_size} differs from {scene.n_radars} sensors")
        if not cells:
            cells = [grid.cell_of(p) for p in positions]
        per_anchor = image.cell_coefficients()[cells]
    else:
        per_anchor = np.stack([anchor_amplitudes(scene, vector, p) for p in positions])

    speeds = np.stack(
        [line_of_sight(radar, positions, scene.ego_velocity)[1] for radar in scene.radars], axis=1
    )
    reference = per_anchor[:, 0]
    if np.any(np.abs(reference) == 0):
        raise NoAnchorError("anchor not detected in the reference sensor")

    n_sensors = scene.n_radars
    offsets = np.zeros(n_sensors)
    phases = np.zeros(n_sensors)
    limits = np.full(n_sensors, math.inf)
    ambiguous = [False] * n_sensors
    for q in range(1, n_sensors):
        mean_speed = float(np.mean(speeds[:, q]))
        if np.any(np.abs(speeds[:, q]) < _MIN_SPEED) or abs(mean_speed) < _MIN_SPEED:
            raise ObservabilityError(
                f"line-of-sight speed of sensor {q} at the anchor is ~0; its clock offset is unobservable"
            )
        ratios = per_anchor[:, q] / reference
        if np.any(ratios == 0):
            raise NoAnchorError(f"anchor not detected in sensor {q}")
        phases[q] = float(np.angle(np.mean(ratios / np.abs(ratios))))
        carrier = scene.radars[q].carrier_hz
        offsets[q] = -phases[q] * SPEED_OF_LIGHT / (4.0 * math.pi * carrier * mean_speed)
        limits[q] = SPEED_OF_LIGHT / (4.0 * carrier * abs(mean_speed))
        if abs(phases[q]) >= math.pi * (1.0 - _WRAP_MARGIN):
            ambiguous[q] = True
            logger.warning(
                "Sensor %d sync phase %.6f rad is at the wrap limit; offsets beyond %.3e s alias",
                q, phases[q], limits[q],
            )

    confidence = np.mean([_correlation(scene, vector, p) for p in positions], axis=0)
    estimate = SyncEstimate(
        offsets_s=offsets,
        phases_rad=phases,
        confidence=confidence,
        anchor_cells=cells,
        anchor_positions=positions,
        max_unambiguous_offset_s=limits,
        ambiguous=ambiguous,
        amplitude_source=amplitude_source,
    )
    logger.info("Estimated sync offsets (us): %s", np.array2string(offsets * 1e6, precision=4))
    return estimate
