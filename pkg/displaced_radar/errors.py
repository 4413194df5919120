"""Exception hierarchy shared by the radar package."""

from __future__ import annotations

from typing import Iterable, List, Optional

import numpy as np


class RadarError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(RadarError, ValueError):
    """Invalid scene, configuration or argument values."""


class ConfigValidationError(ConfigurationError):
    """Configuration document failed validation on one or more fields."""

    def __init__(self, errors: Iterable[str]):
        self.errors: List[str] = list(errors)
        super().__init__("Invalid configuration: " + "; ".join(self.errors))


class GeometryIndexError(RadarError, IndexError):
    """Sensor or element index outside the scene."""


class DegenerateGeometryError(RadarError, ValueError):
    """Coincident points or undefined angles."""


class ContractViolationError(RadarError, ValueError):
    """Inputs break a precondition of the requested model."""


class ConditioningError(RadarError, ArithmeticError):
    """Information matrix is singular or below the eigenvalue floor."""

    def __init__(self, message: str, eigenvalues: Optional[np.ndarray] = None):
        super().__init__(message)
        self.eigenvalues = None if eigenvalues is None else np.asarray(eigenvalues)


class DictionarySizeError(RadarError, MemoryError):
    """Materialising a dictionary would exceed the memory budget."""


class NoAnchorError(RadarError, LookupError):
    """No isolated anchor detection is available for synchronisation."""


class ObservabilityError(RadarError, ValueError):
    """Time offset cannot be observed (line-of-sight velocity is zero)."""


class UndefinedMetricError(RadarError, ValueError):
    """Metric is undefined for the supplied inputs."""
