"""
Logging for qsdlab: one namespaced logger with a rotating file and a console
handler in the main process, and a queue handler in spawned workers.
"""

from __future__ import annotations

import datetime as _dt
import logging as _logging
import logging.handlers as _handlers
import time as _time
from pathlib import Path
from typing import Any, Optional

NAMESPACE = "qsdlab"
LOG_FILE_NAME = "qsdlab.log"
ROTATE_BYTES = 10 * 1024 * 1024
ROTATE_BACKUPS = 5

_FORMAT = "%(asctime)s | %(levelname)-8s | [%(process)d] | %(name)s:%(lineno)d | %(message)s"


class _MillisecondFormatter(_logging.Formatter):
    def __init__(self) -> None:
        super().__init__(fmt=_FORMAT)

    def formatTime(self, record: _logging.LogRecord, datefmt: str | None = None) -> str:  # noqa: N802
        stamp = _dt.datetime.fromtimestamp(record.created)
        return f"{stamp:%Y-%m-%d %H:%M:%S}.{stamp.microsecond // 1000:03d}"


def _level(value: int | str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise TypeError(f"log_level must be a level name or number; got {value!r} ({type(value).__name__})")
    if isinstance(value, int):
        return value
    level = _logging.getLevelName(value.upper())
    if not isinstance(level, int):
        raise ValueError(f"unknown log level {value!r}")
    return level


def default_logs_dir() -> Path:
    return Path.home() / ".qsdlab" / "logs"


def setup_logging(
    *,
    log_level: int | str = _logging.INFO,
    logs_dir: Path | str | None = None,
    log_file: Path | str | None = None,
    console: bool = True,
    log_to_file: bool = True,
    log_queue: Any | None = None,
) -> _logging.Logger:
    """
    Configure the ``qsdlab`` logger and return it. The root logger is untouched.

    With ``log_queue`` every record goes to a QueueHandler (worker processes);
    otherwise records go to a rotating DEBUG-level file and, if ``console``,
    to stderr at ``log_level``. Calling it again replaces the handlers.
    """
    level = _level(log_level)
    logger = get_logger("")
    logger.setLevel(level)
    logger.propagate = False
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    if log_queue is not None:
        queue_handler = _handlers.QueueHandler(log_queue)
        queue_handler.setLevel(level)
        logger.addHandler(queue_handler)
        return logger

    path: Optional[Path] = None
    if log_to_file:
        path = Path(log_file) if log_file is not None else Path(logs_dir or default_logs_dir()) / LOG_FILE_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = _handlers.RotatingFileHandler(
            path, maxBytes=ROTATE_BYTES, backupCount=ROTATE_BACKUPS, encoding="utf-8", delay=True
        )
        file_handler.setLevel(_logging.DEBUG)
        file_handler.setFormatter(_MillisecondFormatter())
        logger.addHandler(file_handler)
    if console:
        stream = _logging.StreamHandler()
        stream.setLevel(level)
        stream.setFormatter(_MillisecondFormatter())
        logger.addHandler(stream)

    logger.info(f"Logging initialized: level={_logging.getLevelName(level)}, file={path}")
    return logger


def get_logger(name: str) -> _logging.Logger:
    """``get_logger("qsd")`` is ``qsdlab.qsd``; the empty name is the package logger."""
    return _logging.getLogger(f"{NAMESPACE}.{name}" if name else NAMESPACE)


def create_queue_listener(log_queue: Any) -> _handlers.QueueListener | None:
    """Listener that replays worker records onto the package logger's handlers."""
    targets = [h for h in get_logger("").handlers if not isinstance(h, _handlers.QueueHandler)]
    if not targets:
        return None
    return _handlers.QueueListener(log_queue, *targets, respect_handler_level=True)


class StepProgress:
    """Throttled DEBUG progress lines for long integration loops.

    Emits at most one record per ``every_seconds`` so tight loops do not flood
    the rotating file handler.
    """

    def __init__(
        self,
        logger: _logging.Logger,
        label: str,
        total_steps: int,
        *,
        every_seconds: float = 5.0,
    ) -> None:
        self.logger = logger
        self.label = label
        self.total_steps = max(int(total_steps), 0)
        self.every_seconds = every_seconds
        self._started = _time.monotonic()
        self._last = self._started

    def update(self, step: int, **fields: Any) -> None:
        now = _time.monotonic()
        if now - self._last < self.every_seconds or not self.logger.isEnabledFor(_logging.DEBUG):
            return
        self._last = now
        extra = " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in fields.items())
        self.logger.debug(
            f"{self.label}: step {step}/{self.total_steps} "
            f"({now - self._started:.1f}s) {extra}".rstrip()
        )

    def done(self) -> None:
        self.logger.debug(
            f"{self.label}: finished {self.total_steps} steps in "
            f"{_time.monotonic() - self._started:.2f}s"
        )
