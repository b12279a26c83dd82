"""
Diagnostic counters and error payloads for the explicit integrators.
"""

from __future__ import annotations

import os
import threading
import time
import traceback
from typing import Any, Dict, Optional

from .utils.logging import get_logger

logger = get_logger("diagnostics")


class IntegrationMonitor:
    """Tracks invariant drift for one integration run.

    ``kind`` is a short label ("master", "fokker_planck") used in log lines.
    The ``observe_*`` methods only record; deciding to abort is left to the
    integrator, which then calls :meth:`report_error` and raises.
    """

    def __init__(self, kind: str, *, negativity_tolerance: float = 1e-6):
        self.kind = kind
        self.negativity_tolerance = negativity_tolerance
        self.start_time: Optional[float] = None
        self.steps = 0
        self.err_cnt = 0
        self.negativity_events = 0
        self.max_norm_drift = 0.0
        self.max_hermiticity_defect = 0.0
        self.min_value = float("inf")
        self.last_time = 0.0

    def start(self) -> None:
        self.start_time = time.time()

    def observe_step(self, model_time: float) -> None:
        self.steps += 1
        self.last_time = model_time

    def observe_norm(self, drift: float) -> None:
        self.max_norm_drift = max(self.max_norm_drift, abs(drift))

    def observe_hermiticity(self, defect: float) -> None:
        self.max_hermiticity_defect = max(self.max_hermiticity_defect, defect)

    def observe_minimum(self, value: float) -> None:
        """Record the smallest eigenvalue or field value seen so far."""
        if value < self.min_value:
            self.min_value = value
        if value < -self.negativity_tolerance:
            self.negativity_events += 1
            if self.negativity_events == 1:
                logger.warning(
                    f"{self.kind}: positivity excursion min={value:.3e} "
                    f"at t={self.last_time:.6g} (monitored, not projected)"
                )

    @property
    def uptime(self) -> float:
        return (time.time() - self.start_time) if self.start_time else 0.0

    def snapshot(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "steps": self.steps,
            "model_time": self.last_time,
            "max_norm_drift": self.max_norm_drift,
            "max_hermiticity_defect": self.max_hermiticity_defect,
            "min_value": None if self.min_value == float("inf") else self.min_value,
            "negativity_events": self.negativity_events,
            "error_count": self.err_cnt,
            "uptime_seconds": self.uptime,
        }

    def report_error(
        self, error_type: str, message: str, exception: Optional[BaseException] = None
    ) -> Dict[str, Any]:
        """Log an integration failure and return its payload."""
        self.err_cnt += 1
        context_info = f"[uptime={self.uptime:.2f}s, steps={self.steps}, errors={self.err_cnt}]"
        logger.error(f"{context_info} {self.kind} {error_type}: {message}")
        if exception and logger.isEnabledFor(10):
            logger.debug(f"Full traceback for {error_type}:", exc_info=exception)

        payload: Dict[str, Any] = {
            "error_type": error_type,
            "message": message,
            "exception": str(exception) if exception else None,
            "timestamp": time.time(),
            "process_id": os.getpid(),
            "thread_id": threading.get_ident(),
            "diagnostics": self.snapshot(),
        }
        if exception is not None and exception.__traceback__ is not None:
            payload["traceback"] = "".join(
                traceback.format_exception(type(exception), exception, exception.__traceback__)
            )
        return payload
