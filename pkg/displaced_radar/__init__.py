"""Displaced-sensor FMCW MIMO radar: simulation, performance bounds and sparse imaging."""

__version__ = "0.3.0"
