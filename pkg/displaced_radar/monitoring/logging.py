"""Logging configuration utilities."""

from __future__ import annotations

import logging
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL,
}


def parse_level(level: Union[str, int]) -> int:
    """Translate a level name such as ``"info"`` into a logging constant."""
    if isinstance(level, int):
        return level
    try:
        return _LEVELS[level.strip().lower()]
    except KeyError as exc:
        raise ValueError(
            f"Unknown log level {level!r}; expected one of {', '.join(_LEVELS)}"
        ) from exc


def configure_logging(level: Union[str, int] = logging.INFO, *, log_file: Optional[str] = None) -> None:
    """Configure application-wide logging.

    Parameters
    ----------
    level:
        Level name or constant for the root logger.
    log_file:
        Optional path where logs are also written. Without it logs go to
        stderr only.
    """

    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(level=parse_level(level), handlers=handlers, format=LOG_FORMAT, force=True)
    logging.getLogger("dotenv").setLevel(logging.WARNING)
