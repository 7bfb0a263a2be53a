"""Logging configuration for estimation and simulation runs.

Console output is human-readable; the file handler writes one JSON object per line so that
Monte Carlo runs and fits can be inspected with jq or pandas afterwards. Every record carries
the run id set by `setup_logging` and the worker thread name, so several runs (or the
replications of one run) sharing a daily file can be told apart.
"""

import json
import logging
import sys
import threading
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

__all__ = [
    "setup_logging",
    "get_logger",
    "log_event",
    "current_run_id",
    "JSONLFileHandler",
    "LOG_DIR",
    "json_default",
]

ROOT_LOGGER = "nsbfm"

# Default log directory; the CLI redirects logs to <out>/logs
LOG_DIR = Path.cwd() / "logs"

_run_id: Optional[str] = None


def current_run_id() -> Optional[str]:
    """Id of the run configured by the last `setup_logging` call."""
    return _run_id


def json_default(value: Any) -> Any:
    """Convert numpy scalars and arrays so json.dumps accepts them."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    return str(value)


class JSONLFileHandler(logging.Handler):
    """Append records as JSON lines to `<log_dir>/<prefix>_YYYYMMDD.jsonl`."""

    def __init__(self, log_dir: Path, prefix: str = ROOT_LOGGER):
        super().__init__()
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self._write_lock = threading.Lock()

    def log_file(self) -> Path:
        """Path of today's log file."""
        return self.log_dir / f"{self.prefix}_{datetime.now():%Y%m%d}.jsonl"

    def to_entry(self, record: logging.LogRecord) -> Dict[str, Any]:
        entry: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "thread": record.threadName,
            "message": record.getMessage(),
        }
        if _run_id is not None:
            entry["run_id"] = _run_id
        event_type = getattr(record, "event_type", None)
        if event_type is not None:
            entry["event_type"] = event_type
        entry.update(getattr(record, "extra_data", {}))
        if record.exc_info:
            entry["exception"] = logging.Formatter().formatException(record.exc_info)
        return entry

    def emit(self, record: logging.LogRecord) -> None:
        try:
            line = json.dumps(self.to_entry(record), ensure_ascii=False, default=json_default)
            # Replication threads log concurrently; keep lines whole
            with self._write_lock, open(self.log_file(), "a", encoding="utf-8") as f:
                f.write(line + "\n")
        except Exception:
            self.handleError(record)


class _LevelColorFormatter(logging.Formatter):
    """Colour the level name, for terminals only."""

    COLORS = {
        logging.DEBUG: "\033[36m",
        logging.INFO: "\033[32m",
        logging.WARNING: "\033[33m",
        logging.ERROR: "\033[31m",
        logging.CRITICAL: "\033[35m",
    }

    def __init__(self, use_color: bool):
        super().__init__("%(asctime)s [%(levelname)s] %(name)s: %(message)s", datefmt="%H:%M:%S")
        self.use_color = use_color

    def formatMessage(self, record: logging.LogRecord) -> str:
        if not self.use_color or record.levelno not in self.COLORS:
            return super().formatMessage(record)
        colored = logging.makeLogRecord(record.__dict__)
        colored.levelname = f"{self.COLORS[record.levelno]}{record.levelname}\033[0m"
        return super().formatMessage(colored)


def setup_logging(
    level: int = logging.INFO,
    log_to_file: bool = True,
    log_to_console: bool = True,
    log_dir: Optional[Path] = None,
    run_id: Optional[str] = None,
) -> logging.Logger:
    """Configure the "nsbfm" logger for one run, replacing earlier handlers.

    Args:
        level: Console log level (the JSONL file always captures DEBUG)
        log_to_file: Whether to write the JSONL file
        log_to_console: Whether to log to stderr (stdout is left to result tables)
        log_dir: Directory for the JSONL file (default: ./logs)
        run_id: Tag written to every JSONL entry (default: a fresh random id)

    Returns:
        The configured "nsbfm" logger
    """
    global _run_id
    _run_id = run_id or uuid.uuid4().hex[:12]

    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(logging.DEBUG if log_to_file else level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if log_to_console:
        console = logging.StreamHandler(sys.stderr)
        console.setLevel(level)
        console.setFormatter(
            _LevelColorFormatter(use_color=hasattr(sys.stderr, "isatty") and sys.stderr.isatty())
        )
        logger.addHandler(console)

    if log_to_file:
        file_handler = JSONLFileHandler(log_dir or LOG_DIR)
        file_handler.setLevel(logging.DEBUG)
        logger.addHandler(file_handler)

    return logger


def get_logger(name: str = ROOT_LOGGER) -> logging.Logger:
    """Get a logger in the package hierarchy; "mle" gives "nsbfm.mle"."""
    if name == ROOT_LOGGER or name.startswith(f"{ROOT_LOGGER}."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def log_event(
    event_type: str,
    data: Dict[str, Any],
    level: int = logging.INFO,
    logger_name: str = ROOT_LOGGER,
) -> None:
    """Log a structured event.

    Args:
        event_type: Event name, e.g. 'fit_done' or 'mc_replication'
        data: Event fields; an optional "message" key becomes the log message
        level: Log level
        logger_name: Short or full logger name
    """
    fields = {k: v for k, v in data.items() if k != "message"}
    get_logger(logger_name).log(
        level,
        data.get("message", event_type),
        extra={"event_type": event_type, "extra_data": fields},
    )
