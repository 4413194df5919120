"""Runtime settings read from the environment (and an optional ``.env`` file)."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv


@dataclass
class RuntimeSettings:
    """Process-wide defaults that the command line may override."""

    threads: int = 1
    output_dir: str = "results"
    log_level: str = "info"
    log_file: Optional[str] = None
    memory_budget_mb: float = 512.0
    seed: int = 0

    @property
    def memory_budget_bytes(self) -> float:
        return self.memory_budget_mb * 1024.0 ** 2


def load_from_env(dotenv_path: Optional[str] = None, *, use_dotenv: bool = True) -> RuntimeSettings:
    """Load runtime settings from environment variables.

    Environment variable names:

    - RADAR_THREADS
    - RADAR_OUTPUT_DIR
    - RADAR_LOG_LEVEL
    - RADAR_LOG_FILE (optional)
    - RADAR_MEMORY_BUDGET_MB
    - RADAR_SEED

    Malformed or out-of-range values fall back to the defaults.
    """
    if use_dotenv:
        load_dotenv(dotenv_path, override=False)

    def _get(name: str, default: Optional[str] = None) -> Optional[str]:
        return os.environ.get(name, default)

    def _get_int(name: str, default: int, minimum: Optional[int] = None) -> int:
        value = _get(name)
        if value is None:
            return default
        try:
            parsed = int(value)
        except ValueError:
            return default
        if minimum is not None and parsed < minimum:
            return default
        return parsed

    def _get_float(name: str, default: float) -> float:
        value = _get(name)
        if value is None:
            return default
        try:
            parsed = float(value)
        except ValueError:
            return default
        return parsed if parsed > 0 else default

    return RuntimeSettings(
        threads=_get_int("RADAR_THREADS", 1, minimum=1),
        output_dir=_get("RADAR_OUTPUT_DIR", "results") or "results",
        log_level=_get("RADAR_LOG_LEVEL", "info") or "info",
        log_file=_get("RADAR_LOG_FILE") or None,
        memory_budget_mb=_get_float("RADAR_MEMORY_BUDGET_MB", 512.0),
        seed=_get_int("RADAR_SEED", 0, minimum=0),
    )
