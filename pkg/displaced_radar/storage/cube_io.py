"""BasebandCube export: raw little-endian complex64 samples plus a text header."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from displaced_radar.errors import ConfigurationError
from displaced_radar.simulation.signal import BasebandCube

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _paths(path: PathLike) -> Tuple[Path, Path]:
    base = Path(path)
    if base.suffix in {".bin", ".hdr"}:
        base = base.with_suffix("")
    return base.with_suffix(".bin"), base.with_suffix(".hdr")


def save_cube(cube: BasebandCube, path: PathLike) -> Tuple[Path, Path]:
    """Write ``<path>.bin`` and ``<path>.hdr``; returns both paths."""
    data_path, header_path = _paths(path)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    cube.vector().astype("<c8").tofile(data_path)
    dims = " ".join(str(d) for d in cube.dims)
    header_path.write_text(
        f"dims: {dims}\nsample_period_s: {cube.sample_period_s!r}\norder: q m n k n_s\ndtype: complex64-le\n",
        encoding="utf-8",
    )
    logger.info("Saved cube %s to %s", cube.dims, data_path)
    return data_path, header_path


def load_cube(path: PathLike) -> BasebandCube:
    """Read a cube written by :func:`save_cube`."""
    data_path, header_path = _paths(path)
    fields = {}
    for line in header_path.read_text(encoding="utf-8").splitlines():
        if ":" in line:
            key, value = line.split(":", 1)
            fields[key.strip()] = value.strip()
    try:
        dims = tuple(int(v) for v in fields["dims"].split())
        sample_period = float(fields["sample_period_s"])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"malformed cube header {header_path}: {exc}") from exc
    samples = np.fromfile(data_path, dtype="<c8")
    return BasebandCube.from_vector(samples.astype(complex), dims, sample_period)
