"""Logging and progress helpers shared by the solvers."""

from .logging import StepProgress, get_logger, setup_logging

__all__ = ["StepProgress", "get_logger", "setup_logging"]
