"""Configuration: environment settings and validated run documents."""

from displaced_radar.config.config import RuntimeSettings, load_from_env
from displaced_radar.config.experiment_config import RunConfig, load_run_config

__all__ = [
    "RuntimeSettings",
    "load_from_env",
    "RunConfig",
    "load_run_config",
]
