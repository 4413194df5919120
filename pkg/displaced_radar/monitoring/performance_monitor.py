"""Timing collection for simulation, solver and sweep phases."""

from __future__ import annotations

import logging
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)


@dataclass
class PerformanceMetrics:
    """Single recorded measurement."""
    component: str
    metric_name: str
    value: float
    unit: str = ""


class PerformanceMonitor:
    """Collects named measurements and summarises them per component."""

    def __init__(self, max_history: int = 10_000):
        """Initialize performance monitor.

        Args:
            max_history: Maximum number of measurements kept per metric
        """
        self.max_history = max_history
        self.metrics_history: Dict[str, List[PerformanceMetrics]] = defaultdict(list)
        self._lock = threading.Lock()

    def record_metric(self, component: str, metric_name: str, value: float, unit: str = "") -> None:
        """Record a measurement.

        Args:
            component: Component name (e.g. 'recovery', 'bounds')
            metric_name: Metric name (e.g. 'bomp-ncp_time')
            value: Measured value
            unit: Unit of measurement (optional)
        """
        metric = PerformanceMetrics(component=component, metric_name=metric_name, value=value, unit=unit)
        key = f"{component}.{metric_name}"
        with self._lock:
            history = self.metrics_history[key]
            history.append(metric)
            if len(history) > self.max_history:
                del history[0]

    def record_execution_time(self, component: str, operation: str, start_time: float) -> float:
        """Record the wall time elapsed since ``start_time`` (from time.perf_counter)."""
        execution_time = time.perf_counter() - start_time
        self.record_metric(component, f"{operation}_time", execution_time, "seconds")
        return execution_time

    def calculate_average_metric(self, component: str, metric_name: str) -> Optional[float]:
        """Mean of all recorded values of one metric, or None if never recorded."""
        with self._lock:
            history = list(self.metrics_history.get(f"{component}.{metric_name}", ()))
        if not history:
            return None
        return sum(m.value for m in history) / len(history)

    def get_performance_summary(self) -> Dict[str, Dict[str, float]]:
        """Count, mean and total per metric key."""
        with self._lock:
            items = {key: list(values) for key, values in self.metrics_history.items()}
        summary: Dict[str, Dict[str, float]] = {}
        for key, history in sorted(items.items()):
            if not history:
                continue
            total = sum(m.value for m in history)
            summary[key] = {"count": float(len(history)), "mean": total / len(history), "total": total}
        return summary

    def log_summary(self, level: int = logging.INFO) -> None:
        """Write the summary to the module logger."""
        for key, stats in self.get_performance_summary().items():
            logger.log(level, "%s: n=%d mean=%.4fs total=%.2fs", key, stats["count"], stats["mean"], stats["total"])

    def reset(self) -> None:
        with self._lock:
            self.metrics_history.clear()


# Global performance monitor instance
_global_monitor: Optional[PerformanceMonitor] = None


def get_performance_monitor() -> PerformanceMonitor:
    """Get or create global performance monitor."""
    global _global_monitor

    if _global_monitor is None:
        _global_monitor = PerformanceMonitor()

    return _global_monitor


class PerformanceTimer:
    """Context manager for timing operations."""

    def __init__(self, component: str, operation: str, monitor: Optional[PerformanceMonitor] = None):
        """Initialize performance timer.

        Args:
            component: Component name
            operation: Operation name
            monitor: Target monitor; the global one when omitted
        """
        self.component = component
        self.operation = operation
        self.monitor = monitor
        self.start_time: Optional[float] = None
        self.elapsed: float = 0.0

    def __enter__(self) -> "PerformanceTimer":
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        if self.start_time is not None:
            monitor = self.monitor or get_performance_monitor()
            self.elapsed = monitor.record_execution_time(self.component, self.operation, self.start_time)
