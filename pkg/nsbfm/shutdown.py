"""Interrupting Monte Carlo runs from the terminal.

The first SIGINT/SIGTERM stops new replications from being scheduled: running ones finish and
the partial run is still summarized. A second signal runs the registered cleanups (which
cancel queued replications) and exits with status 130.
"""

import signal
import sys
import threading
from types import FrameType
from typing import Any, Callable, Dict, List, Optional

from nsbfm.logging_config import get_logger

__all__ = [
    "ShutdownHandler",
    "get_shutdown_handler",
    "shutdown_requested",
    "register_cleanup",
]

logger = get_logger("shutdown")

HANDLED_SIGNALS = (signal.SIGINT, signal.SIGTERM)


class ShutdownHandler:
    """Process-wide interrupt flag, optionally wired to SIGINT/SIGTERM.

    Replication loops poll `shutdown_requested`; tests and embedding code can set the flag
    with `request_shutdown()` without sending a signal.
    """

    _instance: Optional["ShutdownHandler"] = None
    _instance_lock = threading.Lock()

    def __init__(self) -> None:
        self._flag = threading.Event()
        self._reason: Optional[str] = None
        self._callbacks: List[Callable[[], None]] = []
        self._callbacks_lock = threading.Lock()
        self._previous: Dict[int, Any] = {}

    @classmethod
    def get_instance(cls) -> "ShutdownHandler":
        if cls._instance is None:
            with cls._instance_lock:
                if cls._instance is None:
                    cls._instance = cls()
        return cls._instance

    @property
    def installed(self) -> bool:
        return bool(self._previous)

    def install(self) -> "ShutdownHandler":
        """Route SIGINT/SIGTERM here (main thread only; a no-op elsewhere)."""
        if self._previous or threading.current_thread() is not threading.main_thread():
            return self
        for signum in HANDLED_SIGNALS:
            self._previous[signum] = signal.signal(signum, self._on_signal)
        return self

    def uninstall(self) -> None:
        """Put back whatever handled the signals before `install`."""
        for signum, previous in self._previous.items():
            signal.signal(signum, signal.SIG_DFL if previous is None else previous)
        self._previous.clear()

    def _on_signal(self, signum: int, frame: Optional[FrameType]) -> None:
        name = signal.Signals(signum).name
        if self._flag.is_set():
            logger.error(f"{name} received again: cancelling queued replications and exiting")
            self.cleanup()
            sys.exit(130)
        logger.warning(
            f"{name} received: no new replications will start; running ones finish "
            "(repeat to quit now)"
        )
        self.request_shutdown(reason=name)

    @property
    def shutdown_requested(self) -> bool:
        return self._flag.is_set()

    @property
    def reason(self) -> Optional[str]:
        """Signal name or "requested"; None while no shutdown is pending."""
        return self._reason

    def request_shutdown(self, reason: str = "requested") -> None:
        self._reason = reason
        self._flag.set()

    def register_cleanup(self, callback: Callable[[], None]) -> Callable[[], None]:
        """Add a callback for force quit; returns a function that removes it again."""
        with self._callbacks_lock:
            self._callbacks.append(callback)

        def remove() -> None:
            with self._callbacks_lock:
                if callback in self._callbacks:
                    self._callbacks.remove(callback)

        return remove

    def cleanup(self) -> None:
        """Run the registered callbacks once, in registration order."""
        with self._callbacks_lock:
            callbacks, self._callbacks = self._callbacks, []
        for callback in callbacks:
            try:
                callback()
            except Exception as e:
                logger.warning(f"Cleanup callback failed: {e}")

    def reset(self) -> None:
        self._flag.clear()
        self._reason = None


def get_shutdown_handler() -> ShutdownHandler:
    return ShutdownHandler.get_instance()


def shutdown_requested() -> bool:
    return get_shutdown_handler().shutdown_requested


def register_cleanup(callback: Callable[[], None]) -> Callable[[], None]:
    return get_shutdown_handler().register_cleanup(callback)
