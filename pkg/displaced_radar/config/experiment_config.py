"""Run configuration documents: JSON sections with validation and bounds checking.

A document has the sections ``scene``, ``grid``, ``solvers``, ``experiment``,
``bounds``, ``ptrf`` and ``sync`` plus the top-level ``seed`` and
``threads``. Every section has defaults, so ``{}`` is a valid document.
Angles are degrees in the file and radians everywhere else.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np

from displaced_radar.analytics.bounds import (
    BOUND_PANELS,
    POSITION_SCALES,
    BoundOptions,
    MeasurementNoise,
    PriorSpec,
)
from displaced_radar.errors import ConfigurationError, ConfigValidationError
from displaced_radar.imaging.dictionary import PTRF_MODES, ImagingGrid
from displaced_radar.imaging.recovery import SolverConfig
from displaced_radar.imaging.sync import AMPLITUDE_SOURCES
from displaced_radar.orchestration.experiments import SCHEMES, DEFAULT_SCHEMES, Experiment
from displaced_radar.orchestration import scenarios
from displaced_radar.simulation.scene import SPEED_OF_LIGHT, RadarUnit, Scene, Target, make_radar, uniform_mimo_offsets

logger = logging.getLogger(__name__)

SCENE_PRESETS = ("vehicle", "vehicle-reduced", "bounds")
Section = TypeVar("Section")


def _complex_list(values: Optional[Sequence]) -> Optional[np.ndarray]:
    """[[re, im], ...] or [re, ...] into a complex array."""
    if values is None:
        return None
    out = []
    for value in values:
        if isinstance(value, (list, tuple)):
            out.append(complex(float(value[0]), float(value[1])))
        else:
            out.append(complex(float(value)))
    return np.asarray(out, dtype=complex)


def _is_vector(value: Any, length: int = 3) -> bool:
    try:
        return len(value) == length and all(math.isfinite(float(v)) for v in value)
    except (TypeError, ValueError):
        return False


@dataclass
class RadarConfig:
    """One radar; element offsets are explicit or a uniform layout in wavelengths."""

    origin: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    n_tx: int = 2
    n_rx: int = 4
    tx_spacing_wl: float = 2.0
    rx_spacing_wl: float = 0.5
    tx_offsets: Optional[List[List[float]]] = None
    rx_offsets: Optional[List[List[float]]] = None
    carrier_hz: float = 77e9
    bandwidth_hz: float = 500e6
    chirp_s: float = 5e-6
    pri_s: float = 30e-6
    fs_hz: float = 30e6
    n_chirps: int = 10
    sync_offset_s: float = 0.0
    position_error: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def validate(self) -> List[str]:
        errors = []
        if not _is_vector(self.origin):
            errors.append("origin must be a 3-vector")
        if not _is_vector(self.position_error):
            errors.append("position_error must be a 3-vector")
        if self.n_tx < 1 or self.n_rx < 1:
            errors.append("n_tx and n_rx must be >= 1")
        for name in ("carrier_hz", "bandwidth_hz", "chirp_s", "pri_s", "fs_hz"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        if self.chirp_s > self.pri_s:
            errors.append("chirp_s must not exceed pri_s")
        if self.fs_hz * self.chirp_s < 1:
            errors.append("fs_hz * chirp_s must be >= 1")
        if self.n_chirps < 1:
            errors.append("n_chirps must be >= 1")
        for name in ("tx_offsets", "rx_offsets"):
            offsets = getattr(self, name)
            if offsets is not None and not all(_is_vector(v) for v in offsets):
                errors.append(f"{name} must be a list of 3-vectors")
        return errors

    def build(self) -> RadarUnit:
        waveform = {
            "bandwidth_hz": self.bandwidth_hz,
            "chirp_s": self.chirp_s,
            "pri_s": self.pri_s,
            "fs_hz": self.fs_hz,
            "n_chirps": self.n_chirps,
            "sync_offset_s": self.sync_offset_s,
            "position_error": np.asarray(self.position_error, dtype=float),
        }
        if self.tx_offsets is None and self.rx_offsets is None:
            return make_radar(
                self.origin, n_tx=self.n_tx, n_rx=self.n_rx, carrier_hz=self.carrier_hz,
                tx_spacing_wl=self.tx_spacing_wl, rx_spacing_wl=self.rx_spacing_wl, **waveform,
            )
        tx, rx = uniform_mimo_offsets(
            self.n_tx, self.n_rx, SPEED_OF_LIGHT / self.carrier_hz,
            tx_spacing_wl=self.tx_spacing_wl, rx_spacing_wl=self.rx_spacing_wl,
        )
        return RadarUnit(
            origin=np.asarray(self.origin, dtype=float),
            tx_offsets=np.asarray(self.tx_offsets, dtype=float) if self.tx_offsets is not None else tx,
            rx_offsets=np.asarray(self.rx_offsets, dtype=float) if self.rx_offsets is not None else rx,
            carrier_hz=self.carrier_hz,
            **waveform,
        )


@dataclass
class TargetConfig:
    """Point target: common amplitude/phase, or explicit per-sensor reflectivities."""

    position: List[float] = field(default_factory=lambda: [0.0, 25.0, 0.0])
    amplitude_db: float = 0.0
    phase_deg: float = 0.0
    reflectivities: Optional[List[Any]] = None

    def validate(self) -> List[str]:
        errors = []
        if not _is_vector(self.position):
            errors.append("position must be a 3-vector")
        if not math.isfinite(self.amplitude_db) or not math.isfinite(self.phase_deg):
            errors.append("amplitude_db and phase_deg must be finite")
        if self.reflectivities is not None:
            try:
                _complex_list(self.reflectivities)
            except (TypeError, ValueError, IndexError):
                errors.append("reflectivities must be numbers or [re, im] pairs")
        return errors

    def build(self, n_radars: int) -> Target:
        if self.reflectivities is not None:
            values = _complex_list(self.reflectivities)
            if values.size != n_radars:
                raise ConfigurationError(f"target has {values.size} reflectivities for {n_radars} radars")
            return Target(np.asarray(self.position, dtype=float), values)
        amplitude = 10.0 ** (self.amplitude_db / 20.0) * np.exp(1j * math.radians(self.phase_deg))
        return Target.common(self.position, amplitude, n_radars)


@dataclass
class SceneConfig:
    preset: Optional[str] = None
    radars: List[RadarConfig] = field(default_factory=list)
    targets: List[TargetConfig] = field(default_factory=list)
    ego_velocity: Optional[List[float]] = None
    sync_offsets_s: Optional[List[float]] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], errors: List[str]) -> "SceneConfig":
        data = dict(data)
        radars = [_construct(RadarConfig, r, f"scene.radars[{i}]", errors) for i, r in enumerate(data.pop("radars", []))]
        targets = [_construct(TargetConfig, t, f"scene.targets[{i}]", errors) for i, t in enumerate(data.pop("targets", []))]
        section = _construct(cls, data, "scene", errors) or cls()
        section.radars = [r for r in radars if r is not None]
        section.targets = [t for t in targets if t is not None]
        errors.extend(f"scene: {e}" for e in section.validate_structure())
        return section

    def validate(self) -> List[str]:
        errors = []
        if self.preset is not None and self.preset not in SCENE_PRESETS:
            errors.append(f"preset must be one of {', '.join(SCENE_PRESETS)}")
        if self.ego_velocity is not None and not _is_vector(self.ego_velocity):
            errors.append("ego_velocity must be a 3-vector")
        return errors

    def validate_structure(self) -> List[str]:
        errors = []
        if not self.radars and self.preset is None:
            errors.append("needs a radar list or a preset")
        n_radars = self.n_radars
        if self.sync_offsets_s is not None and n_radars is not None and len(self.sync_offsets_s) != n_radars:
            errors.append(f"sync_offsets_s needs {n_radars} values")
        return errors

    @property
    def n_radars(self) -> Optional[int]:
        if self.radars:
            return len(self.radars)
        if self.preset is not None:
            return len(scenarios.BOUNDS_ORIGINS if self.preset == "bounds" else scenarios.VEHICLE_ORIGINS)
        return None

    def build(self) -> Scene:
        if self.radars:
            radars = tuple(r.build() for r in self.radars)
            velocity = np.zeros(3)
        elif self.preset == "bounds":
            radars = scenarios.bounds_scene().radars
            velocity = np.zeros(3)
        elif self.preset in ("vehicle", "vehicle-reduced"):
            radars = scenarios.vehicle_radars(reduced=self.preset == "vehicle-reduced")
            velocity = np.asarray(scenarios.VEHICLE_VELOCITY)
        else:
            raise ConfigurationError("scene needs a radar list or a preset")
        if self.ego_velocity is not None:
            velocity = np.asarray(self.ego_velocity, dtype=float)
        scene = Scene(radars=radars, ego_velocity=velocity)
        if self.sync_offsets_s is not None:
            scene = scene.with_offsets(self.sync_offsets_s)
        return scene.with_targets([t.build(scene.n_radars) for t in self.targets])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "preset": self.preset,
            "radars": [asdict(r) for r in self.radars],
            "targets": [asdict(t) for t in self.targets],
            "ego_velocity": self.ego_velocity,
            "sync_offsets_s": self.sync_offsets_s,
        }


@dataclass
class GridConfig:
    x_range: List[float] = field(default_factory=lambda: [-8.0, 8.0])
    y_range: List[float] = field(default_factory=lambda: [15.0, 35.0])
    spacing_m: Optional[float] = 0.25
    nx: Optional[int] = None
    ny: Optional[int] = None
    z: float = 0.0

    def validate(self) -> List[str]:
        errors = []
        for name in ("x_range", "y_range"):
            value = getattr(self, name)
            if not _is_vector(value, 2) or value[0] > value[1]:
                errors.append(f"{name} must be [min, max] with min <= max")
        if self.spacing_m is None and (self.nx is None or self.ny is None):
            errors.append("spacing_m or both nx and ny are required")
        if self.spacing_m is not None and not self.spacing_m > 0:
            errors.append("spacing_m must be > 0")
        for name in ("nx", "ny"):
            value = getattr(self, name)
            if value is not None and value < 1:
                errors.append(f"{name} must be >= 1")
        return errors

    def build(self) -> ImagingGrid:
        if self.spacing_m is not None:
            return ImagingGrid.from_spacing(self.x_range, self.y_range, self.spacing_m, self.z)
        return ImagingGrid(tuple(self.x_range), tuple(self.y_range), int(self.nx), int(self.ny), self.z)


@dataclass
class ExperimentSection:
    scenario: Optional[str] = None
    schemes: List[str] = field(default_factory=lambda: list(DEFAULT_SCHEMES))
    snr_db: List[Union[float, str]] = field(default_factory=lambda: [10.0])
    n_trials: int = 100
    sync_amplitude_source: str = "image"
    anchor_isolation_m: float = 1.0
    detection_fraction: float = 0.2
    compression_ratio: float = 1.0
    random_phase: bool = True
    materialize: Optional[bool] = None

    def snr_values(self) -> Tuple[float, ...]:
        return tuple(float(v) for v in self.snr_db)

    def validate(self) -> List[str]:
        errors = []
        if self.scenario is not None and self.scenario not in scenarios.SCENARIOS:
            errors.append(f"scenario must be one of {', '.join(scenarios.SCENARIOS)}")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            errors.append(f"unknown schemes {unknown}; valid schemes: {', '.join(SCHEMES)}")
        try:
            self.snr_values()
        except (TypeError, ValueError):
            errors.append("snr_db must hold numbers (\"inf\" for noiseless)")
        if self.n_trials < 1:
            errors.append("n_trials must be >= 1")
        if self.sync_amplitude_source not in AMPLITUDE_SOURCES:
            errors.append(f"sync_amplitude_source must be one of {', '.join(AMPLITUDE_SOURCES)}")
        if self.compression_ratio < 1:
            errors.append("compression_ratio must be >= 1")
        return errors


@dataclass
class BoundsSection:
    panels: List[str] = field(default_factory=lambda: [p.name for p in BOUND_PANELS])
    x_range: List[float] = field(default_factory=lambda: [-50.0, 50.0])
    y_range: List[float] = field(default_factory=lambda: [0.0, 100.0])
    n_points: int = 21
    prior_std_m: float = 0.1
    n_mc: int = 20
    raw_variance: Union[float, List[float]] = 1e3
    range_std_m: float = 0.06
    azimuth_std_deg: float = math.degrees(0.02)
    elevation_std_deg: Optional[float] = None
    derive_point_cloud_noise: bool = False
    alphas: Optional[List[Any]] = None
    coherent_position_scale: str = "as_printed"
    alpha_variance: float = 1.0
    eig_floor: float = 1e-12

    def validate(self) -> List[str]:
        errors = []
        names = {p.name for p in BOUND_PANELS}
        unknown = [p for p in self.panels if p not in names]
        if unknown:
            errors.append(f"unknown panels {unknown}; valid panels: {', '.join(sorted(names))}")
        if self.n_points < 2:
            errors.append("n_points must be >= 2")
        if not self.prior_std_m > 0:
            errors.append("prior_std_m must be > 0")
        if self.n_mc < 1:
            errors.append("n_mc must be >= 1")
        if np.any(np.asarray(self.raw_variance, dtype=float) <= 0):
            errors.append("raw_variance must be > 0")
        if not self.range_std_m > 0 or not self.azimuth_std_deg > 0:
            errors.append("range_std_m and azimuth_std_deg must be > 0")
        if self.coherent_position_scale not in POSITION_SCALES:
            errors.append(f"coherent_position_scale must be one of {', '.join(POSITION_SCALES)}")
        if not self.alpha_variance > 0 or not self.eig_floor > 0:
            errors.append("alpha_variance and eig_floor must be > 0")
        return errors

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        return (np.linspace(self.x_range[0], self.x_range[1], self.n_points),
                np.linspace(self.y_range[0], self.y_range[1], self.n_points))

    def noise(self, n_radars: int) -> MeasurementNoise:
        elevation = None if self.elevation_std_deg is None else math.radians(self.elevation_std_deg)
        raw = self.raw_variance if np.isscalar(self.raw_variance) else np.asarray(self.raw_variance, dtype=float)
        return MeasurementNoise.from_std(
            n_radars, self.range_std_m, math.radians(self.azimuth_std_deg), elevation, raw_variance=raw
        )

    def prior(self, seed: int) -> PriorSpec:
        mean = (0.5 * (self.x_range[0] + self.x_range[1]), 0.5 * (self.y_range[0] + self.y_range[1]), 0.0)
        return PriorSpec.isotropic(mean, self.prior_std_m, n_mc=self.n_mc, seed=seed)

    def options(self) -> BoundOptions:
        return BoundOptions(
            coherent_position_scale=self.coherent_position_scale,
            alpha_variance=self.alpha_variance,
            eig_floor=self.eig_floor,
        )

    def alpha_values(self) -> Optional[np.ndarray]:
        return _complex_list(self.alphas)


@dataclass
class PtrfSection:
    """Point-target response of the first scene target."""

    modes: List[str] = field(default_factory=lambda: list(PTRF_MODES))
    half_span_m: float = 4.0
    step_m: float = 0.01

    def validate(self) -> List[str]:
        errors = []
        unknown = [m for m in self.modes if m not in PTRF_MODES]
        if unknown:
            errors.append(f"unknown PTRF modes {unknown}; valid modes: {', '.join(PTRF_MODES)}")
        if not self.half_span_m > 0 or not self.step_m > 0 or self.step_m > self.half_span_m:
            errors.append("need 0 < step_m <= half_span_m")
        return errors


@dataclass
class SyncSection:
    min_isolation_m: float = 1.0
    anchor_count: int = 1
    amplitude_source: str = "matched_filter"
    snr_db: Optional[float] = None
    anchors: Optional[List[List[float]]] = None

    def validate(self) -> List[str]:
        errors = []
        if self.min_isolation_m < 0:
            errors.append("min_isolation_m must be >= 0")
        if self.anchor_count < 1:
            errors.append("anchor_count must be >= 1")
        if self.amplitude_source not in AMPLITUDE_SOURCES:
            errors.append(f"amplitude_source must be one of {', '.join(AMPLITUDE_SOURCES)}")
        if self.anchors is not None and not all(_is_vector(a) for a in self.anchors):
            errors.append("anchors must be a list of 3-vectors")
        return errors


def _construct(cls: Type[Section], data: Any, name: str, errors: List[str]) -> Optional[Section]:
    """Build a section from a mapping, appending every problem to ``errors``."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{name}: expected an object")
        return None
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        errors.append(f"{name}: unknown field(s) {', '.join(unknown)}")
    try:
        section = cls(**{k: v for k, v in data.items() if k in known})
        problems = section.validate()
    except (TypeError, ValueError) as exc:
        errors.append(f"{name}: {exc}")
        return None
    errors.extend(f"{name}.{problem}" for problem in problems)
    return section


@dataclass
class RunConfig:
    """Complete run configuration."""

    scene: SceneConfig = field(default_factory=lambda: SceneConfig(preset="vehicle"))
    grid: GridConfig = field(default_factory=GridConfig)
    solvers: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    ptrf: PtrfSection = field(default_factory=PtrfSection)
    sync: SyncSection = field(default_factory=SyncSection)
    seed: Optional[int] = None
    threads: Optional[int] = None

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> "RunConfig":
        """Create a configuration, collecting every violated field before raising."""
        errors: List[str] = []
        config_dict = {k: v for k, v in config_dict.items() if k != "manifest"}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(config_dict) - known)
        if unknown:
            errors.append(f"unknown section(s) {', '.join(unknown)}")

        scene_data = config_dict.get("scene")
        scene = SceneConfig.from_dict(scene_data, errors) if isinstance(scene_data, dict) else SceneConfig(preset="vehicle")
        if scene_data is not None and not isinstance(scene_data, dict):
            errors.append("scene: expected an object")

        solvers = SolverConfig()
        solver_data = config_dict.get("solvers") or {}
        try:
            solvers = SolverConfig(**solver_data)
        except ConfigValidationError as exc:
            errors.extend(f"solvers.{e}" for e in exc.errors)
        except TypeError as exc:
            errors.append(f"solvers: {exc}")

        sections = {
            "grid": _construct(GridConfig, config_dict.get("grid"), "grid", errors),
            "experiment": _construct(ExperimentSection, config_dict.get("experiment"), "experiment", errors),
            "bounds": _construct(BoundsSection, config_dict.get("bounds"), "bounds", errors),
            "ptrf": _construct(PtrfSection, config_dict.get("ptrf"), "ptrf", errors),
            "sync": _construct(SyncSection, config_dict.get("sync"), "sync", errors),
        }
        seed = config_dict.get("seed")
        threads = config_dict.get("threads")
        if seed is not None and (not isinstance(seed, int) or seed < 0):
            errors.append("seed must be a non-negative integer")
        if threads is not None and (not isinstance(threads, int) or threads < 1):
            errors.append("threads must be a positive integer")

        if errors:
            logger.error("Configuration validation failed: %s", "; ".join(errors))
            raise ConfigValidationError(errors)
        return cls(scene=scene, solvers=solvers, seed=seed, threads=threads, **sections)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene": self.scene.to_dict(),
            "grid": asdict(self.grid),
            "solvers": self.solvers.to_dict(),
            "experiment": asdict(self.experiment),
            "bounds": asdict(self.bounds),
            "ptrf": asdict(self.ptrf),
            "sync": asdict(self.sync),
            "seed": self.seed,
            "threads": self.threads,
        }

    def validate_runtime_constraints(self) -> List[str]:
        """Warnings about settings that are valid but likely slow or surprising."""
        warnings = []
        if self.experiment.n_trials * len(self.experiment.snr_db) > 1000:
            warnings.append("more than 1000 Monte-Carlo trials requested")
        if self.bounds.n_points ** 2 * self.bounds.n_mc > 50_000:
            warnings.append("bound contours need more than 50k information-matrix evaluations")
        if self.scene.preset == "vehicle" and self.experiment.scenario is not None:
            warnings.append("full vehicle cube selected for imaging; the reduced preset is much faster")
        return warnings

    def build_experiment(
        self,
        *,
        seed: int = 0,
        threads: int = 1,
        memory_budget_bytes: Optional[float] = None,
    ) -> Experiment:
        """Experiment from the scene/grid/solvers/experiment sections.

        A named scenario supplies its own targets and grid.
        """
        scene = self.scene.build()
        grid = self.grid.build()
        if self.experiment.scenario is not None:
            spec = scenarios.get_scenario(self.experiment.scenario)
            scene = scene.with_targets([
                Target.common(p, a, scene.n_radars) for p, a in zip(spec.positions(), spec.amplitudes())
            ])
            grid = spec.grid
        extra = {} if memory_budget_bytes is None else {"memory_budget_bytes": memory_budget_bytes}
        section = self.experiment
        return Experiment(
            scene=scene,
            grid=grid,
            schemes=tuple(section.schemes),
            snr_db=section.snr_values(),
            n_trials=section.n_trials,
            solvers=self.solvers,
            seed=seed,
            sync_amplitude_source=section.sync_amplitude_source,
            anchor_isolation_m=section.anchor_isolation_m,
            detection_fraction=section.detection_fraction,
            compression_ratio=section.compression_ratio,
            random_phase=section.random_phase,
            threads=threads,
            materialize=section.materialize,
            **extra,
        )


def load_run_config(config_file: Optional[Union[str, Path]] = None) -> RunConfig:
    """Load and validate a run configuration; defaults when no file is given.

    Raises:
        ConfigurationError: The file cannot be read or is not JSON.
        ConfigValidationError: One or more fields are invalid (all listed).
    """
    if config_file is None:
        config = RunConfig()
        logger.info("Using default run configuration")
    else:
        path = Path(config_file)
        try:
            config_dict = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(config_dict, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        config = RunConfig.from_dict(config_dict)
        logger.info("Loaded run configuration from %s", path)

    for warning in config.validate_runtime_constraints():
        logger.warning("Configuration warning: %s", warning)
    return config
