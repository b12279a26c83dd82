"""Exception and warning types raised across qsdlab.

Every exception carries a ``diagnostics`` payload (possibly empty) so callers,
including the CLI, can report what the integrator saw when it gave up.
"""

from __future__ import annotations

from typing import Any, Dict, Optional


class QsdLabError(Exception):
    """Base class for all qsdlab errors."""

    def __init__(self, message: str, *, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})


# ─ configuration / validation ─────────────────────────────────────────────────


class ConfigError(QsdLabError, ValueError):
    """Invalid experiment configuration; ``field_path`` names the offending key."""

    def __init__(self, message: str, *, field_path: str | None = None):
        text = f"{field_path}: {message}" if field_path else message
        super().__init__(text)
        self.field_path = field_path


class ModelError(QsdLabError, ValueError):
    """Physically invalid model parameters."""


class NonPositiveMass(ModelError):
    pass


class NonPositiveHbar(ModelError):
    pass


class NonPositiveParameter(ModelError):
    pass


class UnknownTag(QsdLabError, KeyError):
    """Operator or potential tag not in the catalog."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class GridMismatch(QsdLabError, ValueError):
    pass


class CellTooSmall(QsdLabError, ValueError):
    pass


class GridTooLarge(QsdLabError, ValueError):
    pass


# ─ numerical failures ─────────────────────────────────────────────────────────


class NumericalError(QsdLabError, ArithmeticError):
    """An integrator or solver could not produce a trustworthy result."""


class StabilityViolation(NumericalError):
    pass


class NormCollapse(NumericalError):
    pass


class NoStableRoot(NumericalError):
    pass


class CFLViolation(NumericalError):
    pass


class NegativeDiffusion(NumericalError):
    pass


class TrajectoryFailure(NumericalError):
    """A trajectory inside an ensemble failed; ``seed`` identifies it."""

    def __init__(
        self,
        message: str,
        *,
        seed: int | None = None,
        diagnostics: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, diagnostics=diagnostics)
        self.seed = seed


# ─ warnings ───────────────────────────────────────────────────────────────────


class WrapWarning(UserWarning):
    """State amplitude reaches the periodic grid edge (aliasing risk)."""


class ScopeWarning(UserWarning):
    """Operation used outside the regime where its guarantee holds."""


class AmbiguousRootWarning(UserWarning):
    """Both roots of the stationary equation are normalizable."""


class LocalizationWarning(UserWarning):
    """Phase-space estimate taken before trajectories have localized."""


__all__ = [
    "QsdLabError",
    "ConfigError",
    "ModelError",
    "NonPositiveMass",
    "NonPositiveHbar",
    "NonPositiveParameter",
    "UnknownTag",
    "GridMismatch",
    "CellTooSmall",
    "GridTooLarge",
    "NumericalError",
    "StabilityViolation",
    "NormCollapse",
    "NoStableRoot",
    "CFLViolation",
    "NegativeDiffusion",
    "TrajectoryFailure",
    "WrapWarning",
    "ScopeWarning",
    "AmbiguousRootWarning",
    "LocalizationWarning",
]
