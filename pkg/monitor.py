"""Performance monitoring utilities"""

import functools
import logging
import time
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List

logger = logging.getLogger(__name__)


def timing_decorator(func: Callable) -> Callable:
    """Decorator to measure function execution time"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        execution_time = time.perf_counter() - start_time
        logger.info(f"TIMING | Function={func.__name__} | Seconds={execution_time:.3f}")
        return result
    return wrapper


class PerformanceMonitor:
    """Record durations of named processing stages"""

    def __init__(self):
        self.metrics: Dict[str, List[float]] = defaultdict(list)

    def record(self, stage: str, duration: float) -> None:
        """Record one duration of a stage"""
        self.metrics[stage].append(duration)

    @contextmanager
    def track(self, stage: str) -> Iterator[None]:
        """Time the enclosed block as one run of the stage"""
        start_time = time.perf_counter()
        try:
            yield
        finally:
            self.record(stage, time.perf_counter() - start_time)

    def get_average_times(self) -> dict:
        """Get average execution times"""
        return {
            stage: sum(times) / len(times) if times else 0
            for stage, times in self.metrics.items()
        }

    def get_stats(self) -> dict:
        """Get detailed statistics"""
        stats = {}
        for stage, times in self.metrics.items():
            stats[stage] = {
                "avg": sum(times) / len(times),
                "min": min(times),
                "max": max(times),
                "total": sum(times),
                "count": len(times)
            }
        return stats

    def reset(self) -> None:
        """Reset all metrics"""
        self.metrics.clear()
