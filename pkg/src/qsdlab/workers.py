"""
Process pool for embarrassingly parallel numerical work.

Tasks are ``(key, payload)`` pairs handed to a module-level callable in
spawned worker processes; results come back through a queue as payload dicts
with ``kind`` "result" or "error" and are re-ordered by key before the caller
sees them, so the output never depends on worker count or scheduling.

With ``threads <= 1`` everything runs inline in the calling process and
produces identical results.

Note:
    Always call stop() or use the context manager so worker processes and the
    log listener are cleaned up.
"""

from __future__ import annotations

import logging
import logging.handlers as log_handlers
import multiprocessing as mp
import os
import queue as queue_mod
import traceback
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence, Tuple

from .errors import NumericalError, QsdLabError, TrajectoryFailure
from .utils.logging import create_queue_listener, get_logger

logger = get_logger("workers")

__all__ = ["WorkerPool", "TaskFn", "run_tasks"]

TaskFn = Callable[[Any], Any]
WorkerPayload = Dict[str, Any]

# 'spawn' keeps children free of the parent's BLAS threads and open handles.
_CTX = mp.get_context("spawn")


def _worker_process(
    task_fn: TaskFn,
    task_queue: Any,
    result_queue: Any,
    log_level: int,
    log_queue: Any | None,
) -> None:
    """Subprocess target: pull tasks until the ``None`` sentinel arrives."""
    import sys

    from .utils.logging import setup_logging

    if log_queue is not None:
        setup_logging(log_level=log_level, log_queue=log_queue)
    else:
        setup_logging(log_level=log_level, console=True, log_to_file=False)

    current_pid = os.getpid()
    parent_pid = os.getppid()
    logger.debug(f"Worker started: PID={current_pid}, Parent PID={parent_pid}")
    done = 0
    while True:
        try:
            item = task_queue.get(timeout=1.0)
        except queue_mod.Empty:
            if os.getppid() != parent_pid:
                logger.error(f"Parent process {parent_pid} is gone; worker {current_pid} exiting")
                sys.exit(0)
            continue
        if item is None:
            break
        key, payload = item
        try:
            value = task_fn(payload)
            result_queue.put({"kind": "result", "key": key, "value": value})
        except Exception as exc:
            logger.debug(f"Task {key!r} failed in PID={current_pid}", exc_info=True)
            result_queue.put(
                {
                    "kind": "error",
                    "key": key,
                    "error_type": type(exc).__name__,
                    "numerical": isinstance(exc, NumericalError),
                    "message": str(exc),
                    "diagnostics": getattr(exc, "diagnostics", {}),
                    "traceback": traceback.format_exc(),
                    "process_pid": current_pid,
                    "exception": exc if _passes_through(exc) else None,
                }
            )
        done += 1
    logger.debug(f"Worker PID={current_pid} finished {done} tasks")


def _is_seed(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _passes_through(exc: BaseException) -> bool:
    """Model and config errors keep their type across the pool boundary."""
    return isinstance(exc, QsdLabError) and not isinstance(exc, NumericalError)


def _failure(key: Hashable, error_type: str, message: str, diagnostics: Dict[str, Any]) -> TrajectoryFailure:
    # chunk keys are the first seed; the failing trajectory reports its own
    seed = diagnostics.get("seed")
    if not _is_seed(seed):
        seed = key if _is_seed(key) else None
    return TrajectoryFailure(
        f"task {key!r} failed with {error_type}: {message}",
        seed=seed,
        diagnostics={"key": repr(key), "error_type": error_type, **diagnostics},
    )


class WorkerPool:
    """
    Fixed pool of spawned worker processes running one task function.

    Parameters
    ----------
    task_fn : callable
        Module-level (picklable) function called as ``task_fn(payload)``.
    threads : int, default=1
        Number of worker processes; ``<= 1`` runs tasks inline.
    log_level : int, optional
        Logging level in the workers. Defaults to the parent's effective level.
    result_timeout : float, default=600.0
        Seconds to wait for any single result before declaring the pool stuck.
    """

    QUEUE_POLL_INTERVAL: float = 0.5  # seconds

    def __init__(
        self,
        task_fn: TaskFn,
        threads: int = 1,
        log_level: Optional[int] = None,
        result_timeout: float = 600.0,
    ):
        self._task_fn = task_fn
        self._threads = max(1, int(threads))
        self._log_level = log_level if log_level is not None else logger.getEffectiveLevel()
        self._result_timeout = max(result_timeout, self.QUEUE_POLL_INTERVAL)
        self._procs: List[Any] = []
        self._task_queue: Any = None
        self._result_queue: Any = None
        self._log_queue: Any = None
        self._log_listener: log_handlers.QueueListener | None = None

    @property
    def inline(self) -> bool:
        return self._threads <= 1

    def start(self) -> None:
        """Spawn the workers. No-op in inline mode."""
        if self.inline:
            return
        if self.is_running:
            raise RuntimeError("Worker pool already started.")
        self._task_queue = _CTX.Queue()
        self._result_queue = _CTX.Queue()

        base_logger = get_logger("")
        log_queue_for_child = None
        if base_logger.handlers:
            self._log_queue = _CTX.Queue()
            self._log_listener = create_queue_listener(self._log_queue)
            if self._log_listener:
                self._log_listener.start()
                log_queue_for_child = self._log_queue
                logger.debug("Started log queue listener for worker processes")

        for _ in range(self._threads):
            proc = _CTX.Process(
                target=_worker_process,
                args=(self._task_fn, self._task_queue, self._result_queue, self._log_level, log_queue_for_child),
                daemon=True,
            )
            proc.start()
            self._procs.append(proc)
        logger.info(f"Started {len(self._procs)} worker processes: {[p.pid for p in self._procs]}")

    def map(self, tasks: Sequence[Tuple[Hashable, Any]]) -> Dict[Hashable, Any]:
        """Run every task and return ``{key: result}`` in sorted key order."""
        keys = [key for key, _ in tasks]
        if len(set(keys)) != len(keys):
            raise ValueError("task keys must be unique")
        if self.inline:
            results = {}
            for key, payload in tasks:
                try:
                    results[key] = self._task_fn(payload)
                except Exception as exc:
                    if _passes_through(exc):
                        raise
                    diagnostics = getattr(exc, "diagnostics", {})
                    raise _failure(key, type(exc).__name__, str(exc), diagnostics) from exc
            return {k: results[k] for k in sorted(results)}

        if not self.is_running:
            self.start()
        for item in tasks:
            self._task_queue.put(item)

        results: Dict[Hashable, Any] = {}
        waited = 0.0
        while len(results) < len(tasks):
            try:
                item: WorkerPayload = self._result_queue.get(timeout=self.QUEUE_POLL_INTERVAL)
            except queue_mod.Empty:
                waited += self.QUEUE_POLL_INTERVAL
                dead = [p for p in self._procs if not p.is_alive()]
                if dead:
                    missing = sorted(set(keys) - set(results), key=repr)
                    info = ", ".join(f"PID={p.pid} {self._interpret_exit_code(p.exitcode)}" for p in dead)
                    logger.error(f"Worker exited with {len(missing)} tasks outstanding: {info}")
                    raise _failure(missing[0], "WorkerExit", info, {"outstanding": len(missing)})
                if waited >= self._result_timeout:
                    raise TimeoutError(f"no worker result for {waited:.0f}s")
                continue
            waited = 0.0
            if item.get("kind") == "error":
                logger.error(
                    f"Task {item['key']!r} failed in PID={item.get('process_pid')}: "
                    f"{item['error_type']}: {item['message']}"
                )
                logger.debug(item.get("traceback", ""))
                if item.get("exception") is not None:
                    raise item["exception"]
                raise _failure(item["key"], item["error_type"], item["message"], item.get("diagnostics", {}))
            results[item["key"]] = item["value"]
        return {k: results[k] for k in sorted(results)}

    def stop(self) -> None:
        """Send sentinels, join, and escalate to terminate/kill. Safe to call twice."""
        if not self._procs:
            return
        logger.debug(f"Stopping {len(self._procs)} worker processes")
        try:
            for _ in self._procs:
                try:
                    self._task_queue.put(None)
                except (OSError, ValueError):
                    break
            for proc in self._procs:
                proc.join(timeout=5)
                if proc.is_alive():
                    logger.debug(f"Terminating worker PID={proc.pid}")
                    proc.terminate()
                    proc.join(timeout=5)
                if proc.is_alive():
                    logger.warning(f"Worker PID={proc.pid} did not terminate gracefully, killing")
                    proc.kill()
                    proc.join(timeout=2)
                if proc.exitcode is not None and not self._is_normal_termination(proc.exitcode):
                    logger.warning(
                        f"Worker PID={proc.pid} terminated unexpectedly: "
                        f"{self._interpret_exit_code(proc.exitcode)}"
                    )
        finally:
            if self._log_listener is not None:
                self._log_listener.stop()
                self._log_listener = None
            for q in (self._task_queue, self._result_queue, self._log_queue):
                if q is not None:
                    q.close()
            self._task_queue = self._result_queue = self._log_queue = None
            self._procs = []
        logger.debug("Worker pool stopped")

    def close(self) -> None:
        """Alias for stop()."""
        self.stop()

    def __enter__(self) -> "WorkerPool":
        self.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        try:
            self.stop()
        except Exception as e:
            logger.error(f"Error during worker pool cleanup: {e}")

    @property
    def is_running(self) -> bool:
        alive = bool(self._procs) and all(p.is_alive() for p in self._procs)
        if logger.isEnabledFor(logging.DEBUG) and self._procs:
            states = ", ".join(f"{p.pid}:{'alive' if p.is_alive() else p.exitcode}" for p in self._procs)
            logger.debug(f"is_running check: {states}")
        return alive

    @staticmethod
    def _is_normal_termination(exit_code: int) -> bool:
        if exit_code == 0:
            return True
        if exit_code < 0:
            return abs(exit_code) in {2, 15}  # SIGINT, SIGTERM
        return False

    @staticmethod
    def _interpret_exit_code(exit_code: Optional[int]) -> str:
        if exit_code is None:
            return "still running"
        if exit_code == 0:
            return "code=0 (SUCCESS)"
        if exit_code > 0:
            return f"code={exit_code} (ERROR - application exit)"
        signal_map = {
            2: ("SIGINT", "Interrupt from keyboard (Ctrl+C)"),
            6: ("SIGABRT", "Abort signal - program called abort()"),
            9: ("SIGKILL", "Kill signal - process terminated forcefully (often out of memory)"),
            11: ("SIGSEGV", "Segmentation fault - invalid memory reference"),
            15: ("SIGTERM", "Termination signal"),
        }
        sig_num = abs(exit_code)
        name, desc = signal_map.get(sig_num, ("UNKNOWN", "Unknown signal"))
        return f"code={exit_code} (SIGNAL {sig_num}: {name} - {desc})"


def run_tasks(task_fn: TaskFn, tasks: Sequence[Tuple[Hashable, Any]], threads: int = 1) -> Dict[Hashable, Any]:
    """One-shot helper: start a pool, map the tasks, stop it."""
    with WorkerPool(task_fn, threads=threads) as pool:
        return pool.map(tasks)
