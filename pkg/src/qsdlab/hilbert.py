"""
Discretized Hilbert space on a periodic position grid.

Position acts pointwise, momentum acts spectrally (``p̂ = ħk`` on the FFT
lattice).  Every operation is a pure function of its inputs; ``WaveFunction``
amplitudes are stored read-only so values can be shared between threads and
sent to worker processes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from .errors import GridMismatch, UnknownTag, WrapWarning

if TYPE_CHECKING:
    from .model import Potential

__all__ = [
    "Grid",
    "WaveFunction",
    "Observable",
    "OperatorCorrelation",
    "apply_x",
    "apply_p",
    "apply_operator",
    "expectation",
    "correlation",
    "covariance",
    "edge_fraction",
    "MomentState",
    "moments_array",
    "measure_moments",
]

WRAP_THRESHOLD = 1e-6
EDGE_CELLS = 2


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid ``x_j = x_min + j*dx`` with ``n_points`` samples."""

    n_points: int
    x_min: float
    x_max: float
    hbar: float = 1.0

    def __post_init__(self) -> None:
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 8; got {n!r}")
        if not self.x_max > self.x_min:
            raise ValueError(f"x_max must exceed x_min; got [{self.x_min}, {self.x_max})")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive; got {self.hbar}")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        coords = self.x_min + self.dx * np.arange(self.n_points)
        coords.setflags(write=False)
        return coords

    @cached_property
    def p(self) -> np.ndarray:
        """Momentum lattice in FFT order, spanning [-πħ/dx, πħ/dx)."""
        lattice = 2.0 * np.pi * self.hbar * np.fft.fftfreq(self.n_points, d=self.dx)
        lattice.setflags(write=False)
        return lattice

    @property
    def p_max(self) -> float:
        return np.pi * self.hbar / self.dx

    def kinetic_scale(self, mass: float) -> float:
        """Largest kinetic energy representable on the lattice."""
        return (np.pi * self.hbar) ** 2 / (2.0 * mass * self.dx**2)

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatch(f"grid mismatch: {self} vs {other}")


@dataclass(frozen=True)
class WaveFunction:
    """Amplitudes ψ(x_j); normalized means Σ|ψ_j|² dx = 1."""

    grid: Grid
    amplitudes: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=np.complex128, copy=True)
        if amps.shape != (self.grid.n_points,):
            raise GridMismatch(
                f"amplitudes of shape {amps.shape} do not fit a grid of "
                f"{self.grid.n_points} points"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "WaveFunction":
        return cls(grid, fn(np.asarray(grid.x)))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx))

    def normalize(self) -> "WaveFunction":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero state")
        return WaveFunction(self.grid, self.amplitudes / n)

    def inner(self, other: "WaveFunction") -> complex:
        """⟨self|other⟩."""
        self.grid.check_same(other.grid)
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx)

    def with_amplitudes(self, amplitudes: np.ndarray) -> "WaveFunction":
        return WaveFunction(self.grid, amplitudes)


@dataclass(frozen=True)
class OperatorCorrelation:
    """σ(B,C) = ⟨B†C⟩ − ⟨B⟩*⟨C⟩."""

    value: complex

    @property
    def real(self) -> float:
        return float(np.real(self.value))

    @property
    def imag(self) -> float:
        return float(np.imag(self.value))


class Observable(str, Enum):
    X = "x"
    P = "p"
    X2 = "x2"
    P2 = "p2"
    SYM_XP = "sym_xp"
    V = "V"
    DV = "V'"
    X_DV = "xV'"
    P_DV_SYM = "pV'_sym"

    @classmethod
    def parse(cls, tag: Union[str, "Observable"]) -> "Observable":
        if isinstance(tag, Observable):
            return tag
        normalized = _ALIASES.get(tag, tag)
        try:
            return cls(normalized)
        except ValueError:
            known = ", ".join(o.value for o in cls)
            raise UnknownTag(f"unknown operator tag {tag!r}; known tags: {known}") from None

    @property
    def needs_potential(self) -> bool:
        return self in (Observable.V, Observable.DV, Observable.X_DV, Observable.P_DV_SYM)


_ALIASES = {"x²": "x2", "p²": "p2", "dV": "V'", "x_dV": "xV'", "p_dV_sym": "pV'_sym"}


# ─ array-level kernels (batched along the last axis) ──────────────────────────


def _p_array(grid: Grid, amps: np.ndarray, power: int = 1) -> np.ndarray:
    spectrum = np.fft.fft(amps, axis=-1)
    return np.fft.ifft(spectrum * grid.p**power, axis=-1)


def _apply_tag(
    grid: Grid, amps: np.ndarray, tag: Observable, potential: Optional["Potential"]
) -> np.ndarray:
    x = grid.x
    if tag.needs_potential and potential is None:
        raise UnknownTag(f"operator tag {tag.value!r} requires a potential")
    if tag is Observable.X:
        return x * amps
    if tag is Observable.P:
        return _p_array(grid, amps)
    if tag is Observable.X2:
        return x**2 * amps
    if tag is Observable.P2:
        return _p_array(grid, amps, power=2)
    if tag is Observable.SYM_XP:
        return 0.5 * (x * _p_array(grid, amps) + _p_array(grid, x * amps))
    if tag is Observable.V:
        return potential.value(x) * amps
    if tag is Observable.DV:
        return potential.d1(x) * amps
    if tag is Observable.X_DV:
        return x * potential.d1(x) * amps
    # P_DV_SYM
    dv = potential.d1(x)
    return 0.5 * (_p_array(grid, dv * amps) + dv * _p_array(grid, amps))


# ─ public operations ──────────────────────────────────────────────────────────


def edge_fraction(psi: WaveFunction) -> float:
    """Norm fraction held by the outermost grid cells on either side."""
    weights = np.abs(psi.amplitudes) ** 2
    edges = weights[:EDGE_CELLS].sum() + weights[-EDGE_CELLS:].sum()
    total = weights.sum()
    return float(edges / total) if total > 0 else 0.0


def apply_x(psi: WaveFunction) -> WaveFunction:
    return psi.with_amplitudes(psi.grid.x * psi.amplitudes)


def apply_p(psi: WaveFunction) -> WaveFunction:
    """(ħ/i)∂ψ/∂x computed spectrally."""
    fraction = edge_fraction(psi)
    if fraction > WRAP_THRESHOLD:
        warnings.warn(
            f"{fraction:.2e} of the norm sits in the outermost {EDGE_CELLS} grid cells; "
            "spectral momentum may alias. Widen the grid.",
            WrapWarning,
            stacklevel=2,
        )
    return psi.with_amplitudes(_p_array(psi.grid, psi.amplitudes))


def apply_operator(
    psi: WaveFunction, op: Union[str, Observable], potential: Optional["Potential"] = None
) -> WaveFunction:
    tag = Observable.parse(op)
    return psi.with_amplitudes(_apply_tag(psi.grid, psi.amplitudes, tag, potential))


def expectation(
    psi: WaveFunction, op: Union[str, Observable], potential: Optional["Potential"] = None
) -> complex:
    """⟨ψ|Ô|ψ⟩ for a catalog tag."""
    tag = Observable.parse(op)
    applied = _apply_tag(psi.grid, psi.amplitudes, tag, potential)
    return complex(np.vdot(psi.amplitudes, applied) * psi.grid.dx)


def covariance(psi: WaveFunction, b_psi: np.ndarray, c_psi: np.ndarray) -> complex:
    """σ(B,C) given the vectors Bψ and Cψ; B need not be Hermitian."""
    dx = psi.grid.dx
    amps = psi.amplitudes
    b_mean = np.vdot(amps, b_psi) * dx
    c_mean = np.vdot(amps, c_psi) * dx
    return complex(np.vdot(b_psi, c_psi) * dx - np.conj(b_mean) * c_mean)


def correlation(
    psi: WaveFunction,
    b: Union[str, Observable],
    c: Union[str, Observable],
    potential: Optional["Potential"] = None,
) -> OperatorCorrelation:
    b_tag, c_tag = Observable.parse(b), Observable.parse(c)
    b_psi = _apply_tag(psi.grid, psi.amplitudes, b_tag, potential)
    c_psi = b_psi if c_tag is b_tag else _apply_tag(psi.grid, psi.amplitudes, c_tag, potential)
    return OperatorCorrelation(covariance(psi, b_psi, c_psi))


# ─ moments ────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class MomentState:
    """(⟨x⟩, ⟨p⟩, (Δx)², (Δp)², R) with R = ½⟨{x̂,p̂}⟩ − ⟨x⟩⟨p⟩."""

    x_mean: float
    p_mean: float
    var_x: float
    var_p: float
    r: float

    def uncertainty_excess(self, hbar: float = 1.0) -> float:
        """(Δx)²(Δp)² − R² − ħ²/4; nonnegative for every state."""
        return self.var_x * self.var_p - self.r**2 - 0.25 * hbar**2

    def as_tuple(self) -> tuple:
        return (self.x_mean, self.p_mean, self.var_x, self.var_p, self.r)

    FIELDS = ("x_mean", "p_mean", "var_x", "var_p", "r")


def moments_array(grid: Grid, amps: np.ndarray) -> np.ndarray:
    """Moments of normalized states stacked along the last axis, shape (..., 5)."""
    dx = grid.dx
    x = grid.x
    dens = np.abs(amps) ** 2
    p_amps = _p_array(grid, amps)
    x_mean = np.sum(x * dens, axis=-1) * dx
    x2 = np.sum(x**2 * dens, axis=-1) * dx
    p_mean = np.real(np.sum(np.conj(amps) * p_amps, axis=-1)) * dx
    p2 = np.sum(np.abs(p_amps) ** 2, axis=-1) * dx
    sym = np.real(np.sum(np.conj(x * amps) * p_amps, axis=-1)) * dx
    return np.stack(
        [x_mean, p_mean, x2 - x_mean**2, p2 - p_mean**2, sym - x_mean * p_mean], axis=-1
    )


def measure_moments(psi: WaveFunction) -> MomentState:
    return MomentState(*(float(v) for v in moments_array(psi.grid, psi.amplitudes)))
