"""Shared fixtures: tiny scenes that keep every test well under a second."""

from __future__ import annotations

import numpy as np
import pytest

from displaced_radar.imaging.dictionary import ImagingGrid
from displaced_radar.orchestration.scenarios import VEHICLE_ORIGINS, VEHICLE_VELOCITY
from displaced_radar.simulation.scene import Scene, Target, make_radar

TINY_WAVEFORM = {
    "bandwidth_hz": 500e6,
    "chirp_s": 5e-6,
    "fs_hz": 3.2e6,
    "pri_s": 30e-6,
    "n_chirps": 2,
}


def tiny_radars(offsets_s=(0.0, 0.0, 0.0), n_tx: int = 2, n_rx: int = 4, **overrides):
    waveform = {**TINY_WAVEFORM, **overrides}
    return tuple(
        make_radar(origin, n_tx=n_tx, n_rx=n_rx, sync_offset_s=offset, **waveform)
        for origin, offset in zip(VEHICLE_ORIGINS, offsets_s)
    )


@pytest.fixture
def tiny_scene() -> Scene:
    """Three radars (2 Tx, 4 Rx, K=2, N_s=16), moving, one unit target at (0, 20)."""
    radars = tiny_radars()
    return Scene(
        radars=radars,
        targets=(Target.common((0.0, 20.0, 0.0), 1.0, len(radars)),),
        ego_velocity=np.asarray(VEHICLE_VELOCITY),
    )


@pytest.fixture
def static_scene() -> Scene:
    radars = tiny_radars()
    return Scene(radars=radars, targets=(Target.common((1.0, 15.0, 0.0), 1.0, len(radars)),))


@pytest.fixture
def small_grid() -> ImagingGrid:
    """11 x 9 cells at 0.5 m around y = 20 m."""
    return ImagingGrid.from_spacing((-2.5, 2.5), (18.0, 22.0), 0.5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
