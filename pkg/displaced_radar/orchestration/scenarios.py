"""Named scene presets for the radar simulations and bound studies."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from displaced_radar.analytics.bounds import MeasurementNoise, PriorSpec
from displaced_radar.errors import ConfigurationError
from displaced_radar.imaging.dictionary import ImagingGrid
from displaced_radar.simulation.scene import RadarUnit, Scene, Target, make_radar

logger = logging.getLogger(__name__)

VEHICLE_ORIGINS = ((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 2.5, 0.0))
VEHICLE_VELOCITY = (1.0, 15.0, 0.0)
VEHICLE_WAVEFORM = {
    "bandwidth_hz": 500e6,
    "chirp_s": 5e-6,
    "fs_hz": 30e6,
    "pri_s": 30e-6,
    "n_chirps": 10,
}
# N_s = 32, K = 4 keeps Monte-Carlo imaging tractable
REDUCED_WAVEFORM = {**VEHICLE_WAVEFORM, "fs_hz": 6.4e6, "n_chirps": 4}

BOUNDS_ORIGINS = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0))
BOUNDS_WAVEFORM = {
    "bandwidth_hz": 150e6,
    "chirp_s": 5e-6,
    "fs_hz": 10e6,
    "pri_s": 30e-6,
    "n_chirps": 128,
}
BOUNDS_RAW_VARIANCE = 1e3
BOUNDS_PRIOR_STD_M = 0.1
BOUNDS_RANGE_STD_M = 0.06
BOUNDS_AZIMUTH_STD_RAD = 0.02

SYNC_OFFSETS_S = (0.0, 10e-6, 5e-6)
ANCHOR_BOOST_DB = 7.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Target layout and imaging grid of a named scenario."""

    name: str
    targets: Tuple[Tuple[float, float], ...]
    amplitudes_db: Tuple[float, ...]
    grid: ImagingGrid
    close_pair: Optional[Tuple[int, int]] = None
    description: str = ""

    def positions(self) -> np.ndarray:
        return np.array([[x, y, 0.0] for x, y in self.targets])

    def amplitudes(self) -> np.ndarray:
        return 10.0 ** (np.asarray(self.amplitudes_db) / 20.0)


def _boosted_first(count: int) -> Tuple[float, ...]:
    return (ANCHOR_BOOST_DB,) + (0.0,) * (count - 1)


SCENARIOS: Dict[str, ScenarioSpec] = {
    "medium-range-5tgt": ScenarioSpec(
        name="medium-range-5tgt",
        targets=((-2.0, 20.0), (-2.0, 24.0), (-0.5, 22.0), (1.0, 20.0), (1.0, 21.5)),
        amplitudes_db=_boosted_first(5),
        grid=ImagingGrid.from_spacing((-3.0, 2.0), (19.0, 25.0), 0.5),
        description="five medium-range targets, the first 7 dB stronger",
    ),
    "close-pair": ScenarioSpec(
        name="close-pair",
        targets=((-2.0, 26.0), (0.0, 24.0), (0.5, 24.0), (1.0, 20.0), (-1.0, 21.0)),
        amplitudes_db=_boosted_first(5),
        grid=ImagingGrid.from_spacing((-3.0, 2.0), (19.5, 27.0), 0.25),
        close_pair=(1, 2),
        description="two targets 0.5 m apart at 24 m among five, top-left anchor 7 dB stronger",
    ),
    "near-range-grid": ScenarioSpec(
        name="near-range-grid",
        targets=((-1.0, 5.0), (-0.5, 5.0), (0.0, 5.0), (0.5, 5.0))
        + tuple((0.0, round(5.6 + 0.3 * i, 6)) for i in range(8)),
        amplitudes_db=(0.0,) * 12,
        grid=ImagingGrid.from_spacing((-2.0, 2.0), (4.0, 9.0), 0.1),
        description="four points 0.5 m apart at 5 m and eight points 0.3 m apart in range",
    ),
}


def scenario_names() -> Tuple[str, ...]:
    return tuple(SCENARIOS)


def get_scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigurationError(f"unknown scenario {name!r}; valid scenarios: {', '.join(SCENARIOS)}") from None


def vehicle_radars(
    *,
    reduced: bool = False,
    carriers_hz: Optional[Sequence[float]] = None,
    offsets_s: Sequence[float] = (0.0, 0.0, 0.0),
) -> Tuple[RadarUnit, ...]:
    """Three front-looking radars, 2 Tx x 4 Rx each, common 77 GHz carrier by default."""
    waveform = REDUCED_WAVEFORM if reduced else VEHICLE_WAVEFORM
    carriers = carriers_hz or (77e9,) * len(VEHICLE_ORIGINS)
    return tuple(
        make_radar(origin, carrier_hz=carrier, sync_offset_s=offset, **waveform)
        for origin, carrier, offset in zip(VEHICLE_ORIGINS, carriers, offsets_s)
    )


def vehicle_scene(
    targets: Sequence[Sequence[float]] = ((0.0, 25.0, 0.0),),
    amplitudes: Optional[Sequence[complex]] = None,
    *,
    reduced: bool = False,
    offsets_s: Sequence[float] = (0.0, 0.0, 0.0),
    carriers_hz: Optional[Sequence[float]] = None,
) -> Scene:
    """Radar layout, waveform and ego velocity of the simulation parameter table."""
    radars = vehicle_radars(reduced=reduced, carriers_hz=carriers_hz, offsets_s=offsets_s)
    amplitudes = np.ones(len(targets)) if amplitudes is None else amplitudes
    return Scene(
        radars=radars,
        targets=tuple(Target.common(p, a, len(radars)) for p, a in zip(targets, amplitudes)),
        ego_velocity=np.asarray(VEHICLE_VELOCITY),
    )


def vehicle_grid(spacing_m: float = 0.25) -> ImagingGrid:
    """Imaging area X [-8, 8] m, Y [15, 35] m."""
    return ImagingGrid.from_spacing((-8.0, 8.0), (15.0, 35.0), spacing_m)


def scenario_scene(name: str, *, offsets_s: Sequence[float] = SYNC_OFFSETS_S, reduced: bool = True) -> Scene:
    """Vehicle radars with a named target layout and injected clock offsets."""
    spec = get_scenario(name)
    scene = vehicle_scene(spec.positions(), spec.amplitudes(), reduced=reduced, offsets_s=offsets_s)
    logger.debug("Scenario %s: %s", name, spec.description)
    return scene


def bounds_scene() -> Scene:
    """Static three-radar line used by the bound study."""
    radars = tuple(make_radar(origin, **BOUNDS_WAVEFORM) for origin in BOUNDS_ORIGINS)
    return Scene(radars=radars)


def bounds_noise(n_radars: int = 3, raw_variance: float = BOUNDS_RAW_VARIANCE) -> MeasurementNoise:
    return MeasurementNoise.from_std(
        n_radars, BOUNDS_RANGE_STD_M, BOUNDS_AZIMUTH_STD_RAD, raw_variance=raw_variance
    )


def bounds_prior(n_mc: int = 20, seed: int = 0) -> PriorSpec:
    return PriorSpec.isotropic((0.0, 50.0, 0.0), BOUNDS_PRIOR_STD_M, n_mc=n_mc, seed=seed)


def bounds_axes(n: int = 21) -> Tuple[np.ndarray, np.ndarray]:
    """Contour axes x in [-50, 50] m and y in [0, 100] m."""
    return np.linspace(-50.0, 50.0, n), np.linspace(0.0, 100.0, n)
