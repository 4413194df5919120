"""File writers for imaging, bound and experiment results.

Every writer creates parent directories, writes deterministic text (fixed
float format, no timestamps) and returns the path it wrote.
"""

from __future__ import annotations

import json
import logging
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy

from displaced_radar import __version__
from displaced_radar.analytics.bounds import ContourResult
from displaced_radar.imaging.dictionary import ImagingGrid
from displaced_radar.imaging.recovery import SparseImage
from displaced_radar.imaging.sync import SyncEstimate
from displaced_radar.orchestration.experiments import NmseTable, ScenarioReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.10g"
PGM_FLOOR_DB = -40.0


def _prepare(path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def _write_frame(frame: pd.DataFrame, path: PathLike, *, index: bool = False) -> Path:
    target = _prepare(path)
    frame.to_csv(target, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("Wrote %s (%d rows)", target, len(frame))
    return target


def save_grid_csv(x: np.ndarray, y: np.ndarray, values: np.ndarray, path: PathLike) -> Path:
    """Matrix CSV: header row holds x, first column holds y, one row per y."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(y), len(x)):
        raise ValueError(f"grid values of shape {values.shape} do not match axes ({len(y)}, {len(x)})")
    frame = pd.DataFrame(values, index=pd.Index(np.asarray(y, dtype=float), name="y"), columns=list(np.asarray(x, dtype=float)))
    frame.columns = [FLOAT_FORMAT % c for c in frame.columns]
    return _write_frame(frame, path, index=True)


def save_contour_csv(contour: ContourResult, path: PathLike) -> Path:
    """Bound contour as a grid CSV; flagged cells are written as NaN."""
    return save_grid_csv(contour.x, contour.y, contour.values, path)


def save_pgm(values: np.ndarray, path: PathLike, floor_db: float = PGM_FLOOR_DB) -> Path:
    """8-bit binary PGM of a power image in dB, clipped at ``floor_db`` below the peak.

    Row 0 of the file is the largest y, so the picture reads like a map.
    """
    power = np.asarray(values, dtype=float)
    peak = float(np.nanmax(power)) if power.size else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10.0 * np.log10(power / peak) if peak > 0 else np.full(power.shape, floor_db)
    db = np.nan_to_num(db, nan=floor_db, neginf=floor_db)
    pixels = np.round(255.0 * (np.clip(db, floor_db, 0.0) - floor_db) / -floor_db).astype(np.uint8)
    pixels = pixels[::-1]
    target = _prepare(path)
    height, width = pixels.shape
    with target.open("wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(pixels.tobytes())
    return target


def save_cut_csv(offsets: np.ndarray, values: np.ndarray, path: PathLike, *, in_db: bool = False) -> Path:
    """Two-column cut: offset in metres and normalised response (linear or dB)."""
    values = np.asarray(values, dtype=float)
    if in_db:
        with np.errstate(divide="ignore"):
            values = 10.0 * np.log10(values)
    column = "response_db" if in_db else "response"
    return _write_frame(pd.DataFrame({"offset_m": offsets, column: values}), path)


def save_widths_csv(widths: Mapping[str, Mapping[str, float]], path: PathLike) -> Path:
    """Half-power widths per mode and cut axis."""
    rows = [{"mode": mode, **{f"{axis}_width_m": value for axis, value in axes.items()}} for mode, axes in widths.items()]
    return _write_frame(pd.DataFrame(rows), path)


def sparse_image_frame(image: SparseImage, grid: ImagingGrid) -> pd.DataFrame:
    """Non-zero coefficients as (x, y, sensor, real, imag); sensor is -1 for coherent images."""
    values = image.cell_coefficients()
    positions = grid.positions
    rows = []
    for cell in range(values.shape[0]):
        for column in range(values.shape[1]):
            value = values[cell, column]
            if value != 0:
                sensor = column if image.block_size > 1 else -1
                rows.append({
                    "x": positions[cell, 0], "y": positions[cell, 1], "sensor": sensor,
                    "real": value.real, "imag": value.imag,
                })
    return pd.DataFrame(rows, columns=["x", "y", "sensor", "real", "imag"])


def save_sparse_image_csv(image: SparseImage, grid: ImagingGrid, path: PathLike, *, single_sensor: bool = False) -> Path:
    frame = sparse_image_frame(image, grid)
    if single_sensor:
        frame["sensor"] = 0
    return _write_frame(frame, path)


def save_sync_report(
    estimate: SyncEstimate,
    directory: PathLike,
    stem: str = "sync",
    *,
    true_offsets_s: Optional[Sequence[float]] = None,
) -> Dict[str, Path]:
    """Plain-text report and one-row-per-sensor CSV.

    With ``true_offsets_s`` the CSV also carries the injected offsets relative
    to sensor 0 and the estimation error.
    """
    base = Path(directory)
    text = estimate.report()
    frame = pd.DataFrame(estimate.to_rows())
    if true_offsets_s is not None:
        truth = np.asarray(true_offsets_s, dtype=float)
        frame["true_offset_s"] = truth - truth[0]
        frame["error_s"] = frame["offset_s"] - frame["true_offset_s"]
        text += "\n" + "\n".join(
            f"  sensor {q}: injected {t * 1e6:+.6f} us, error {e * 1e6:+.6f} us"
            for q, t, e in zip(frame["sensor"], frame["true_offset_s"], frame["error_s"])
        )
    text_path = _prepare(base / f"{stem}_report.txt")
    text_path.write_text(text + "\n", encoding="utf-8")
    csv_path = _write_frame(frame, base / f"{stem}.csv")
    return {"report": text_path, "csv": csv_path}


def save_scenario_summary(report: ScenarioReport, path: PathLike) -> Path:
    """One row per imaging mode: detections, close-pair separation and true-cell correlation."""
    rows = [
        {
            "mode": mode,
            "n_detections": len(report.detections.get(mode, [])),
            "pair_resolved": report.separation.get(mode, ""),
            "target_correlation_db": report.correlation_db.get(mode, np.nan),
        }
        for mode in report.images
    ]
    return _write_frame(pd.DataFrame(rows), path)


def save_image_grids(image: SparseImage, grid: ImagingGrid, directory: PathLike, stem: str) -> Dict[str, Path]:
    """Per-cell magnitude as a grid CSV and its power as a PGM."""
    base = Path(directory)
    magnitude = grid.to_image(image.magnitude())
    return {
        "csv": save_grid_csv(grid.x, grid.y, magnitude, base / f"{stem}_magnitude.csv"),
        "pgm": save_pgm(magnitude ** 2, base / f"{stem}.pgm"),
    }


def save_nmse_table(table: NmseTable, directory: PathLike) -> Dict[str, Path]:
    """Long table, wide table, per-trial metrics and per-trial target coefficients."""
    base = Path(directory)
    paths = {
        "long": _write_frame(table.to_frame(), base / "nmse_table.csv"),
        "wide": _write_frame(table.wide_frame(), base / "nmse_table_wide.csv"),
        "trials": _write_frame(table.trials_frame(), base / "nmse_trials.csv"),
    }
    if table.coefficients:
        paths["coefficients"] = _write_frame(table.coefficients_frame(), base / "nmse_coefficients.csv")
    return paths


def library_versions() -> Dict[str, str]:
    return {
        "displaced_radar": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_manifest(
    path: PathLike,
    config: Mapping[str, Any],
    *,
    command: str,
    seed: int,
    outputs: Optional[Iterable[PathLike]] = None,
) -> Path:
    """JSON run manifest; the ``config`` section is itself a loadable run configuration."""
    target = _prepare(path)
    document = {
        **config,
        "manifest": {
            "command": command,
            "seed": seed,
            "versions": library_versions(),
            "outputs": sorted(Path(p).name for p in (outputs or ())),
        },
    }
    target.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote run manifest %s", target)
    return target


def save_point_cloud_noise(range_std: Sequence[float], azimuth_std: Sequence[float], path: PathLike) -> Path:
    frame = pd.DataFrame({
        "sensor": np.arange(len(range_std)),
        "range_std_m": range_std,
        "azimuth_std_rad": azimuth_std,
    })
    return _write_frame(frame, path)
