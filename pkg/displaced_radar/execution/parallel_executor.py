"""Parallel execution manager for independent Monte-Carlo trials and grid cells.

Results always come back in submission order, so aggregates computed from a
batch do not depend on the number of workers or on completion order.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

Task = Tuple[str, Callable[..., Any], tuple, dict]


@dataclass
class TaskResult:
    """Result of a single task execution."""
    task_id: str
    success: bool
    result: Any
    error: Optional[str]
    execution_time: float


@dataclass
class BatchResult:
    """Result of a batch execution."""
    total_tasks: int
    successful_tasks: int
    failed_tasks: int
    total_time: float
    results: List[TaskResult]

    @property
    def success_rate(self) -> float:
        """Calculate success rate as percentage."""
        return (self.successful_tasks / self.total_tasks * 100) if self.total_tasks > 0 else 0.0

    def values(self) -> List[Any]:
        """Results of the successful tasks, in submission order."""
        return [r.result for r in self.results if r.success]


class ParallelExecutor:
    """Thread-pool executor; numpy and scipy release the GIL in the heavy kernels."""

    def __init__(self, max_workers: int = 1):
        """Initialize parallel executor.

        Args:
            max_workers: Number of worker threads; 1 runs tasks inline
        """
        if max_workers < 1:
            raise ValueError("max_workers must be >= 1")
        self.max_workers = max_workers

    def execute_batch(self, tasks: Sequence[Task], description: str = "Batch execution") -> BatchResult:
        """Execute a batch of tasks.

        Args:
            tasks: List of (task_id, function, args, kwargs)
            description: Description for logging

        Returns:
            BatchResult whose ``results`` follow the order of ``tasks``
        """
        start_time = time.perf_counter()
        logger.info("Starting %s with %d tasks on %d worker(s)", description, len(tasks), self.max_workers)

        if self.max_workers == 1 or len(tasks) <= 1:
            results = [self._execute_single_task(*task) for task in tasks]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                futures = [executor.submit(self._execute_single_task, *task) for task in tasks]
                results = [future.result() for future in futures]

        total_time = time.perf_counter() - start_time
        successful_tasks = sum(1 for r in results if r.success)
        batch_result = BatchResult(
            total_tasks=len(tasks),
            successful_tasks=successful_tasks,
            failed_tasks=len(results) - successful_tasks,
            total_time=total_time,
            results=results,
        )

        for failed in (r for r in results if not r.success):
            logger.warning("Task %s failed: %s", failed.task_id, failed.error)
        logger.info(
            "%s completed: %d/%d successful (%.1f%%) in %.2fs",
            description, successful_tasks, len(tasks), batch_result.success_rate, total_time,
        )
        return batch_result

    def map(self, func: Callable[..., Any], items: Sequence[Any], description: str = "Batch execution") -> BatchResult:
        """Apply ``func`` to every item, one task per item."""
        tasks = [(str(index), func, (item,), {}) for index, item in enumerate(items)]
        return self.execute_batch(tasks, description)

    @staticmethod
    def _execute_single_task(task_id: str, func: Callable[..., Any], args: tuple, kwargs: dict) -> TaskResult:
        """Execute a single task with timing and error capture."""
        start_time = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - failures are reported per task
            return TaskResult(task_id, False, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - start_time)
        return TaskResult(task_id, True, result, None, time.perf_counter() - start_time)
