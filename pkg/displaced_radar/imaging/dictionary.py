"""Imaging grid, sensing operators and point-target responses.

Every operator maps a coefficient vector over grid cells to the stacked
measurement vector and exposes the handful of primitives the solvers need
(``apply``, ``adjoint``, ``columns``, ``column_norms``). Steering columns are
either held in memory or regenerated chunk by chunk, depending on the memory
budget; both paths share the same column generator so they agree exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator

from displaced_radar.errors import ConfigurationError, DictionarySizeError
from displaced_radar.execution.parallel_executor import ParallelExecutor
from displaced_radar.simulation.scene import Scene, as_points, as_vector
from displaced_radar.simulation.signal import sensor_steering, steering_matrix, sync_phases

logger = logging.getLogger(__name__)

PTRF_MODES = ("single", "noncoherent", "coherent")
DEFAULT_MEMORY_BUDGET_BYTES = 512 * 1024 ** 2
_CHUNK_ELEMENTS = 1 << 21
_BYTES_PER_SAMPLE = 16


@dataclass(frozen=True)
class ImagingGrid:
    """Rectangular grid of candidate positions at height ``z``.

    Cells are ordered row-major: cell ``l = iy * nx + ix`` sits at
    ``(x[ix], y[iy], z)``.
    """

    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    nx: int
    ny: int
    z: float = 0.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError("grid needs nx >= 1 and ny >= 1")
        for name, (low, high), count in (("x_range", self.x_range, self.nx), ("y_range", self.y_range, self.ny)):
            if low > high:
                raise ConfigurationError(f"{name} minimum exceeds maximum")
            if count == 1 and low != high:
                raise ConfigurationError(f"{name} must be degenerate when it has a single cell")
        object.__setattr__(self, "x_range", (float(self.x_range[0]), float(self.x_range[1])))
        object.__setattr__(self, "y_range", (float(self.y_range[0]), float(self.y_range[1])))

    @classmethod
    def from_spacing(
        cls, x_range: Sequence[float], y_range: Sequence[float], spacing: float, z: float = 0.0
    ) -> "ImagingGrid":
        if spacing <= 0:
            raise ConfigurationError("grid spacing must be > 0")
        nx = int(round((x_range[1] - x_range[0]) / spacing)) + 1
        ny = int(round((y_range[1] - y_range[0]) / spacing)) + 1
        x_high = x_range[0] + (nx - 1) * spacing
        y_high = y_range[0] + (ny - 1) * spacing
        return cls((x_range[0], x_high), (y_range[0], y_high), nx, ny, z)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_range[0], self.x_range[1], self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_range[0], self.y_range[1], self.ny)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def positions(self) -> np.ndarray:
        """Cell centres, shape (L, 3)."""
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel(), np.full(self.n_cells, self.z)])

    def cell_position(self, cell: int) -> np.ndarray:
        if not 0 <= cell < self.n_cells:
            raise ConfigurationError(f"cell {cell} outside grid of {self.n_cells} cells")
        iy, ix = divmod(cell, self.nx)
        return np.array([self.x[ix], self.y[iy], self.z])

    def cell_of(self, point: Sequence[float]) -> int:
        """Index of the cell nearest to ``point`` in the grid plane."""
        p = as_vector(point, "point")
        ix = int(np.argmin(np.abs(self.x - p[0])))
        iy = int(np.argmin(np.abs(self.y - p[1])))
        return iy * self.nx + ix

    def contains(self, point: Sequence[float]) -> bool:
        p = as_vector(point, "point")
        return self.x_range[0] <= p[0] <= self.x_range[1] and self.y_range[0] <= p[1] <= self.y_range[1]

    def to_image(self, values: np.ndarray) -> np.ndarray:
        """Reshape per-cell values into an (ny, nx) image."""
        values = np.asarray(values)
        if values.shape[0] != self.n_cells:
            raise ConfigurationError(f"expected {self.n_cells} cell values, got {values.shape[0]}")
        return values.reshape(self.ny, self.nx, *values.shape[1:])


class SensingOperator(Protocol):
    """Linear map from grid coefficients to measurements."""

    shape: Tuple[int, int]
    block_size: int

    def apply(self, coefficients: np.ndarray) -> np.ndarray: ...

    def adjoint(self, data: np.ndarray) -> np.ndarray: ...

    def columns(self, indices: Sequence[int]) -> np.ndarray: ...

    def column_norms(self) -> np.ndarray: ...


def as_linear_operator(operator: SensingOperator) -> LinearOperator:
    """Wrap a sensing operator for scipy's iterative routines."""
    return LinearOperator(operator.shape, matvec=operator.apply, rmatvec=operator.adjoint, dtype=complex)


class MatrixOperator:
    """Sensing operator over an explicit matrix."""

    def __init__(self, matrix: np.ndarray, block_size: int = 1):
        self.matrix = np.asarray(matrix, dtype=complex)
        if self.matrix.shape[1] % block_size:
            raise ConfigurationError("matrix columns are not a multiple of block_size")
        self.shape = self.matrix.shape
        self.block_size = block_size

    def apply(self, coefficients: np.ndarray) -> np.ndarray:
        return self.matrix @ coefficients

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        return self.matrix.conj().T @ data

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        return self.matrix[:, list(indices)]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=0)


class GridSteering:
    """Stacked steering vectors h(Φ_l) for every grid cell, stored or regenerated."""

    def __init__(
        self,
        scene: Scene,
        grid: ImagingGrid,
        *,
        materialize: Optional[bool] = None,
        memory_budget_bytes: float = DEFAULT_MEMORY_BUDGET_BYTES,
        executor: Optional[ParallelExecutor] = None,
    ):
        self.scene = scene
        self.grid = grid
        self.positions = grid.positions
        self.n_rows = scene.measurement_length
        self.n_cells = grid.n_cells
        self.memory_budget_bytes = memory_budget_bytes
        self.chunk_cells = max(1, _CHUNK_ELEMENTS // self.n_rows)
        self.sensor_slices = [scene.sensor_rows(q) for q in range(scene.n_radars)]

        footprint = self.n_rows * self.n_cells * _BYTES_PER_SAMPLE
        if materialize is None:
            materialize = footprint <= memory_budget_bytes
        elif materialize and footprint > memory_budget_bytes:
            raise DictionarySizeError(
                f"dictionary footprint L*Q*QMNKN_s = {self.n_cells}*{scene.n_radars}*{self.n_rows} entries; "
                f"storing the {self.n_rows}x{self.n_cells} steering matrix needs {footprint / 1e6:.1f} MB, "
                f"over the {memory_budget_bytes / 1e6:.1f} MB budget"
            )
        self.materialized = bool(materialize)
        self._matrix: Optional[np.ndarray] = None
        if self.materialized:
            self._matrix = self._build(executor)
        logger.info(
            "Grid steering for %d cells x %d rows (%s, %.1f MB dense)",
            self.n_cells, self.n_rows, "materialized" if self.materialized else "matrix-free", footprint / 1e6,
        )

    def _build(self, executor: Optional[ParallelExecutor]) -> np.ndarray:
        starts = list(range(0, self.n_cells, self.chunk_cells))
        executor = executor or ParallelExecutor(max_workers=1)
        batch = executor.map(self._generate_chunk, starts, description="steering generation")
        matrix = np.empty((self.n_rows, self.n_cells), dtype=complex, order="F")
        for start, task in zip(starts, batch.results):
            if not task.success:
                raise RuntimeError(f"steering generation failed for cells from {start}: {task.error}")
            matrix[:, start:start + task.result.shape[1]] = task.result
        return matrix

    def _generate_chunk(self, start: int) -> np.ndarray:
        return self.generate(np.arange(start, min(start + self.chunk_cells, self.n_cells)))

    def generate(self, cells: Sequence[int]) -> np.ndarray:
        """Regenerate columns for ``cells`` from geometry."""
        return steering_matrix(self.scene, self.positions[np.asarray(cells, dtype=int)])

    def columns(self, cells: Sequence[int]) -> np.ndarray:
        cells = np.asarray(cells, dtype=int)
        if self._matrix is not None:
            return self._matrix[:, cells]
        return self.generate(cells)

    def chunks(self) -> Iterator[Tuple[slice, np.ndarray]]:
        """Yield (cell slice, columns) over the whole grid."""
        for start in range(0, self.n_cells, self.chunk_cells):
            cells = slice(start, min(start + self.chunk_cells, self.n_cells))
            if self._matrix is not None:
                yield cells, self._matrix[:, cells]
            else:
                yield cells, self.generate(np.arange(cells.start, cells.stop))


class BlockDictionary:
    """Non-coherent dictionary: Q columns per cell, column (l, q) holds sensor-q rows of h(Φ_l).

    Coefficient index of (cell l, sensor q) is ``l * Q + q``.
    """

    def __init__(self, steering: GridSteering):
        self.steering = steering
        self.n_sensors = steering.scene.n_radars
        self.block_size = self.n_sensors
        self.shape = (steering.n_rows, steering.n_cells * self.n_sensors)
        self._norms: Optional[np.ndarray] = None

    @property
    def grid(self) -> ImagingGrid:
        return self.steering.grid

    def apply(self, coefficients: np.ndarray) -> np.ndarray:
        coefficients = np.asarray(coefficients, dtype=complex).reshape(-1, self.n_sensors)
        out = np.zeros(self.shape[0], dtype=complex)
        for cells, block in self.steering.chunks():
            for q, rows in enumerate(self.steering.sensor_slices):
                out[rows] += block[rows] @ coefficients[cells, q]
        return out

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=complex)
        out = np.zeros((self.steering.n_cells, self.n_sensors), dtype=complex)
        for cells, block in self.steering.chunks():
            for q, rows in enumerate(self.steering.sensor_slices):
                out[cells, q] = block[rows].conj().T @ data[rows]
        return out.reshape(-1)

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        indices = np.asarray(indices, dtype=int)
        cells, sensors = np.divmod(indices, self.n_sensors)
        unique_cells, inverse = np.unique(cells, return_inverse=True)
        source = self.steering.columns(unique_cells)
        out = np.zeros((self.shape[0], indices.size), dtype=complex)
        for j, (position, q) in enumerate(zip(inverse, sensors)):
            rows = self.steering.sensor_slices[q]
            out[rows, j] = source[rows, position]
        return out

    def block(self, cell: int) -> np.ndarray:
        """H_s(Φ_l): the (rows x Q) block of one cell."""
        return self.columns(np.arange(cell * self.n_sensors, (cell + 1) * self.n_sensors))

    def column_norms(self) -> np.ndarray:
        if self._norms is None:
            norms = np.empty((self.steering.n_cells, self.n_sensors))
            for cells, block in self.steering.chunks():
                for q, rows in enumerate(self.steering.sensor_slices):
                    norms[cells, q] = np.linalg.norm(block[rows], axis=0)
            self._norms = norms.reshape(-1)
        return self._norms

    def to_dense(self) -> np.ndarray:
        footprint = self.shape[0] * self.shape[1] * _BYTES_PER_SAMPLE
        if footprint > self.steering.memory_budget_bytes:
            raise DictionarySizeError(
                f"dense block dictionary L*Q*QMNKN_s = {self.steering.n_cells}*{self.n_sensors}*{self.shape[0]} "
                f"entries ({footprint / 1e6:.1f} MB) exceeds the budget"
            )
        return self.columns(np.arange(self.shape[1]))


class CoherentDictionary:
    """Coherent dictionary: column l is h(Φ_l) with sensor-q rows scaled by ĉ_q(Φ_l)."""

    block_size = 1

    def __init__(self, steering: GridSteering, offsets_s: Sequence[float]):
        self.steering = steering
        self.offsets_s = np.asarray(offsets_s, dtype=float)
        self.phases = sync_phases(steering.scene, steering.positions, self.offsets_s)
        self.shape = (steering.n_rows, steering.n_cells)
        self._norms: Optional[np.ndarray] = None

    @property
    def grid(self) -> ImagingGrid:
        return self.steering.grid

    def apply(self, coefficients: np.ndarray) -> np.ndarray:
        coefficients = np.asarray(coefficients, dtype=complex)
        out = np.zeros(self.shape[0], dtype=complex)
        for cells, block in self.steering.chunks():
            for q, rows in enumerate(self.steering.sensor_slices):
                out[rows] += block[rows] @ (coefficients[cells] * self.phases[cells, q])
        return out

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=complex)
        out = np.zeros(self.shape[1], dtype=complex)
        for cells, block in self.steering.chunks():
            for q, rows in enumerate(self.steering.sensor_slices):
                out[cells] += self.phases[cells, q].conj() * (block[rows].conj().T @ data[rows])
        return out

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        cells = np.asarray(indices, dtype=int)
        out = np.array(self.steering.columns(cells), dtype=complex)
        for q, rows in enumerate(self.steering.sensor_slices):
            out[rows] *= self.phases[cells, q][None, :]
        return out

    def column_norms(self) -> np.ndarray:
        if self._norms is None:
            norms = np.empty(self.shape[1])
            for cells, block in self.steering.chunks():
                norms[cells] = np.linalg.norm(block, axis=0)
            self._norms = norms
        return self._norms


def build_grid_steering(
    scene: Scene,
    grid: ImagingGrid,
    *,
    materialize: Optional[bool] = None,
    memory_budget_bytes: float = DEFAULT_MEMORY_BUDGET_BYTES,
    executor: Optional[ParallelExecutor] = None,
) -> GridSteering:
    return GridSteering(
        scene, grid, materialize=materialize, memory_budget_bytes=memory_budget_bytes, executor=executor
    )


def build_block_dictionary(
    scene: Scene,
    grid: ImagingGrid,
    *,
    materialize: Optional[bool] = None,
    memory_budget_bytes: float = DEFAULT_MEMORY_BUDGET_BYTES,
    steering: Optional[GridSteering] = None,
) -> BlockDictionary:
    """Non-coherent block dictionary over ``grid`` (static targets, known ego motion)."""
    if steering is None:
        steering = build_grid_steering(scene, grid, materialize=materialize, memory_budget_bytes=memory_budget_bytes)
    return BlockDictionary(steering)


def build_coherent_dictionary(
    scene: Scene,
    grid: ImagingGrid,
    sync_estimates,
    *,
    materialize: Optional[bool] = None,
    memory_budget_bytes: float = DEFAULT_MEMORY_BUDGET_BYTES,
    steering: Optional[GridSteering] = None,
) -> CoherentDictionary:
    """Coherent dictionary carrying the estimated sync phases.

    ``sync_estimates`` is either a sequence of Q offsets in seconds or an
    object with an ``offsets_s`` attribute. The first sensor is the
    reference and should have offset 0.
    """
    offsets = np.asarray(getattr(sync_estimates, "offsets_s", sync_estimates), dtype=float)
    if offsets.shape != (scene.n_radars,):
        raise ConfigurationError(f"expected {scene.n_radars} sync offsets, got shape {offsets.shape}")
    if offsets[0] != 0.0:
        logger.warning("Reference sensor offset is %.3e s, expected 0", offsets[0])
    if steering is None:
        steering = build_grid_steering(scene, grid, materialize=materialize, memory_budget_bytes=memory_budget_bytes)
    return CoherentDictionary(steering, offsets)


# -- compression ----------------------------------------------------------------------

@dataclass(eq=False)
class Compressor:
    """Measurement compression matrix G of shape (P, n_in)."""

    matrix: np.ndarray
    kind: str = "gaussian"
    selected_rows: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape


def gaussian_compressor(n_out: int, n_in: int, seed: int = 0) -> Compressor:
    """Complex Gaussian G with CN(0, 1/n_in) entries (unit expected row norm)."""
    if not 1 <= n_out <= n_in:
        raise ConfigurationError("gaussian compressor needs 1 <= n_out <= n_in")
    rng = np.random.default_rng(seed)
    scale = math.sqrt(0.5 / n_in)
    matrix = scale * (rng.standard_normal((n_out, n_in)) + 1j * rng.standard_normal((n_out, n_in)))
    return Compressor(matrix=matrix, kind="gaussian")


def subsample_compressor(n_out: int, n_in: int, seed: int = 0) -> Compressor:
    """Row selector picking ``n_out`` distinct samples in ascending order."""
    if not 1 <= n_out <= n_in:
        raise ConfigurationError("subsample compressor needs 1 <= n_out <= n_in")
    rows = np.sort(np.random.default_rng(seed).choice(n_in, size=n_out, replace=False))
    matrix = np.zeros((n_out, n_in), dtype=complex)
    matrix[np.arange(n_out), rows] = 1.0
    return Compressor(matrix=matrix, kind="subsample", selected_rows=rows)


def identity_compressor(n_in: int) -> Compressor:
    return Compressor(matrix=np.eye(n_in, dtype=complex), kind="identity", selected_rows=np.arange(n_in))


def compress(vector: np.ndarray, compressor: Compressor) -> np.ndarray:
    """G r for a stacked measurement vector."""
    vector = np.asarray(vector, dtype=complex).reshape(-1)
    if vector.size != compressor.shape[1]:
        raise ConfigurationError(f"vector length {vector.size} does not match compressor input {compressor.shape[1]}")
    if compressor.selected_rows is not None:
        return vector[compressor.selected_rows]
    return compressor.matrix @ vector


class CompressedOperator:
    """G applied on top of another sensing operator; columns are compressed on demand."""

    def __init__(self, base: SensingOperator, compressor: Compressor):
        if compressor.shape[1] != base.shape[0]:
            raise ConfigurationError(
                f"compressor input {compressor.shape[1]} does not match operator rows {base.shape[0]}"
            )
        self.base = base
        self.compressor = compressor
        self.shape = (compressor.shape[0], base.shape[1])
        self.block_size = base.block_size
        self._norms: Optional[np.ndarray] = None

    def apply(self, coefficients: np.ndarray) -> np.ndarray:
        return compress(self.base.apply(coefficients), self.compressor)

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        return self.base.adjoint(self.compressor.matrix.conj().T @ np.asarray(data, dtype=complex))

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        return self.compressor.matrix @ self.base.columns(indices)

    def column_norms(self) -> np.ndarray:
        if self._norms is None:
            norms = np.empty(self.shape[1])
            step = 256
            for start in range(0, self.shape[1], step):
                indices = np.arange(start, min(start + step, self.shape[1]))
                norms[indices] = np.linalg.norm(self.columns(indices), axis=0)
            self._norms = norms
        return self._norms


# -- point target response --------------------------------------------------------------

def _check_mode(mode: str) -> None:
    if mode not in PTRF_MODES:
        raise ConfigurationError(f"unknown PTRF mode {mode!r}; valid modes: {', '.join(PTRF_MODES)}")


def matched_filter_response(
    scene: Scene,
    points: np.ndarray,
    p_true: Sequence[float],
    mode: str,
    alphas: Optional[Sequence[complex]] = None,
) -> np.ndarray:
    """Un-normalised matched-filter power of a point target at ``p_true`` over ``points``.

    single: |α_1|^2 |h_1(p)^H h_1(p_true)|^2 (first sensor only)
    noncoherent: sum_q |α_q|^2 |h_q(p)^H h_q(p_true)|^2
    coherent: |α_1|^2 |h(p)^H h(p_true)|^2
    """
    _check_mode(mode)
    pts = as_points(points, "points")
    weights = np.abs(np.ones(scene.n_radars) if alphas is None else np.asarray(alphas, dtype=complex)) ** 2
    sensors = [0] if mode == "single" else list(range(scene.n_radars))
    references = {
        q: sensor_steering(scene.radars[q], as_vector(p_true, "p_true")[None, :], scene.ego_velocity).reshape(-1)
        for q in sensors
    }
    chunk = max(1, _CHUNK_ELEMENTS // scene.samples_per_sensor)
    response = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        stop = min(start + chunk, pts.shape[0])
        inner = np.empty((stop - start, len(sensors)), dtype=complex)
        for j, q in enumerate(sensors):
            block = sensor_steering(scene.radars[q], pts[start:stop], scene.ego_velocity).reshape(stop - start, -1)
            inner[:, j] = block.conj() @ references[q]
        if mode == "coherent":
            response[start:stop] = weights[0] * np.abs(inner.sum(axis=1)) ** 2
        else:
            response[start:stop] = (np.abs(inner) ** 2) @ weights[sensors]
    return response


def ptrf(
    scene: Scene,
    grid: ImagingGrid,
    p_true: Sequence[float],
    mode: str,
    alphas: Optional[Sequence[complex]] = None,
) -> np.ndarray:
    """Normalised point-target response over the grid, shape (ny, nx); 1 at p_true."""
    _check_mode(mode)
    if not grid.contains(p_true):
        raise ConfigurationError(f"p_true {list(p_true)} lies outside the imaging grid")
    peak = matched_filter_response(scene, as_vector(p_true, "p_true")[None, :], p_true, mode, alphas)[0]
    values = matched_filter_response(scene, grid.positions, p_true, mode, alphas) / peak
    return grid.to_image(values)


def cut_directions(scene: Scene, p_true: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Unit range direction (from the first radar, in the x-y plane) and its in-plane normal."""
    diff = as_vector(p_true, "p_true") - scene.radars[0].origin
    diff[2] = 0.0
    norm = np.linalg.norm(diff)
    if norm == 0:
        raise ConfigurationError("cut direction undefined for a point above the first radar")
    range_dir = diff / norm
    return range_dir, np.array([-range_dir[1], range_dir[0], 0.0])


def ptrf_cut(
    scene: Scene,
    p_true: Sequence[float],
    axis: str,
    mode: str,
    *,
    half_span_m: float = 4.0,
    step_m: float = 0.01,
    alphas: Optional[Sequence[complex]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Normalised response along the range or cross-range line through ``p_true``."""
    _check_mode(mode)
    if axis not in ("range", "cross_range"):
        raise ConfigurationError(f"cut axis must be 'range' or 'cross_range', got {axis!r}")
    range_dir, cross_dir = cut_directions(scene, p_true)
    direction = range_dir if axis == "range" else cross_dir
    count = int(round(half_span_m / step_m))
    offsets = np.arange(-count, count + 1) * step_m
    points = as_vector(p_true, "p_true")[None, :] + offsets[:, None] * direction[None, :]
    values = matched_filter_response(scene, points, p_true, mode, alphas)
    return offsets, values / values[count]


def half_power_width(offsets: np.ndarray, values: np.ndarray, level: float = 0.5) -> float:
    """Main-lobe width at ``level`` of the peak, linearly interpolated (−3 dB by default)."""
    offsets = np.asarray(offsets, dtype=float)
    values = np.asarray(values, dtype=float) / np.max(values)
    peak = int(np.argmax(values))

    def crossing(indices: Sequence[int]) -> Optional[float]:
        previous = peak
        for index in indices:
            if values[index] < level:
                v0, v1 = values[previous], values[index]
                return offsets[previous] + (level - v0) / (v1 - v0) * (offsets[index] - offsets[previous])
            previous = index
        return None

    left = crossing(range(peak - 1, -1, -1))
    right = crossing(range(peak + 1, values.size))
    if left is None or right is None:
        logger.warning("Main lobe does not fall below %.2f inside the cut; width undefined", level)
        return math.inf
    return float(right - left)


def image_magnitude(coefficients: np.ndarray, block_size: int) -> np.ndarray:
    """Per-cell magnitude; blocks combine as the root of summed squared magnitudes."""
    coefficients = np.asarray(coefficients, dtype=complex).reshape(-1, block_size)
    return np.sqrt(np.sum(np.abs(coefficients) ** 2, axis=1))


__all__: List[str] = [
    "PTRF_MODES",
    "ImagingGrid",
    "SensingOperator",
    "MatrixOperator",
    "GridSteering",
    "BlockDictionary",
    "CoherentDictionary",
    "Compressor",
    "CompressedOperator",
    "as_linear_operator",
    "build_grid_steering",
    "build_block_dictionary",
    "build_coherent_dictionary",
    "gaussian_compressor",
    "subsample_compressor",
    "identity_compressor",
    "compress",
    "matched_filter_response",
    "ptrf",
    "ptrf_cut",
    "cut_directions",
    "half_power_width",
    "image_magnitude",
]
