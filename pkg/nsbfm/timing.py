"""Wall-clock timing for estimation phases and CLI runs.

Example:
    from nsbfm.timing import timer, get_timings

    with timer("factor_update"):
        update_factors(...)

    timings = get_timings()
"""

import threading
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

__all__ = ["timer", "get_timings", "reset_timings", "TimingTracker"]


class TimingTracker:
    """Accumulate count/total/min/max durations per named operation."""

    def __init__(self) -> None:
        self.timings: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.Lock()

    def record(self, operation: str, duration: float) -> None:
        """Add one measured duration for an operation."""
        with self._lock:
            stats = self.timings.setdefault(
                operation,
                {"count": 0, "total_seconds": 0.0, "min_seconds": float("inf"), "max_seconds": 0.0},
            )
            stats["count"] += 1
            stats["total_seconds"] += duration
            stats["min_seconds"] = min(stats["min_seconds"], duration)
            stats["max_seconds"] = max(stats["max_seconds"], duration)

    @contextmanager
    def measure(self, operation: str) -> Iterator[None]:
        """Context manager timing one execution of an operation."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record(operation, time.perf_counter() - start)

    def get_all(self) -> Dict[str, Any]:
        """All timings rounded for JSON, plus a `__summary__` with per-operation shares."""
        with self._lock:
            snapshot = {op: dict(stats) for op, stats in self.timings.items()}

        result: Dict[str, Any] = {}
        for op, stats in snapshot.items():
            result[op] = {
                "count": stats["count"],
                "total_seconds": round(stats["total_seconds"], 3),
                "avg_seconds": round(stats["total_seconds"] / stats["count"], 3),
                "min_seconds": round(stats["min_seconds"], 3),
                "max_seconds": round(stats["max_seconds"], 3),
            }

        if snapshot:
            total = sum(stats["total_seconds"] for stats in snapshot.values())
            result["__summary__"] = {
                "total_seconds": round(total, 3),
                "percent": {
                    op: round(stats["total_seconds"] / total * 100, 1) if total > 0 else 0.0
                    for op, stats in snapshot.items()
                },
            }
        return result

    def reset(self) -> None:
        with self._lock:
            self.timings.clear()


_tracker: Optional[TimingTracker] = None
_tracker_lock = threading.Lock()


def _get_tracker() -> TimingTracker:
    global _tracker
    if _tracker is None:
        with _tracker_lock:
            if _tracker is None:
                _tracker = TimingTracker()
    return _tracker


@contextmanager
def timer(operation: str) -> Iterator[None]:
    """Time an operation on the process-wide tracker.

    Args:
        operation: Name of the operation (e.g. "factor_update", "mc_replication")
    """
    with _get_tracker().measure(operation):
        yield


def get_timings() -> Dict[str, Any]:
    """Timings collected since the last reset."""
    return _get_tracker().get_all()


def reset_timings() -> None:
    """Clear the process-wide tracker."""
    _get_tracker().reset()
