"""
Open-system model: L = e^{iθ}(a x̂ + i b p̂), H = p̂²/2m + V(x̂) + c{x̂, p̂}.

``LindbladModel`` is an immutable value; ``discretize`` binds it to a grid and
returns the array kernels the integrators use in their inner loops.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    ModelError,
    NonPositiveHbar,
    NonPositiveMass,
    NonPositiveParameter,
    UnknownTag,
)
from .hilbert import Grid, _p_array

__all__ = [
    "Potential",
    "Free",
    "Harmonic",
    "InvertedHarmonic",
    "Quartic",
    "DoubleWell",
    "Tabulated",
    "QBMParams",
    "LindbladModel",
    "DiscreteModel",
    "standard",
    "from_qbm",
    "validity_ratio",
    "EPS_FLOOR",
]

EPS_FLOOR = 1e-12


# ────────────────────────────────────────────────────────────────────────────────
# Potential catalog
# ────────────────────────────────────────────────────────────────────────────────


class Potential:
    """V(x) with its first three derivatives, evaluated pointwise."""

    tag = ""

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d1(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d2(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d3(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_quadratic(self) -> bool:
        return False

    def describe(self) -> Dict[str, Any]:
        params = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}  # type: ignore[arg-type]
        return {"kind": self.tag, **params}

    @staticmethod
    def from_tag(kind: str, **params: Any) -> "Potential":
        try:
            cls = _CATALOG[kind]
        except KeyError:
            raise UnknownTag(
                f"unknown potential {kind!r}; known: {', '.join(sorted(_CATALOG))}"
            ) from None
        try:
            return cls(**params)
        except TypeError as exc:
            raise ModelError(f"bad parameters for potential {kind!r}: {exc}") from exc


def _zeros(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Free(Potential):
    tag = "free"

    def value(self, x):
        return _zeros(x)

    d1 = d2 = d3 = value

    @property
    def is_quadratic(self) -> bool:
        return True


@dataclass(frozen=True)
class Harmonic(Potential):
    """V = ½ m ω² x²."""

    omega: float = 1.0
    mass: float = 1.0
    tag = "harmonic"

    def __post_init__(self) -> None:
        if not self.omega > 0:
            raise NonPositiveParameter(f"harmonic omega must be positive; got {self.omega}")
        if not self.mass > 0:
            raise NonPositiveMass(f"harmonic mass must be positive; got {self.mass}")

    @property
    def _k(self) -> float:
        return self.mass * self.omega**2

    def value(self, x):
        return 0.5 * self._k * np.asarray(x, dtype=float) ** 2

    def d1(self, x):
        return self._k * np.asarray(x, dtype=float)

    def d2(self, x):
        return np.full_like(np.asarray(x, dtype=float), self._k)

    def d3(self, x):
        return _zeros(x)

    @property
    def is_quadratic(self) -> bool:
        return True


@dataclass(frozen=True)
class InvertedHarmonic(Harmonic):
    """V = −½ m ω² x²."""

    tag = "inverted_harmonic"

    @property
    def _k(self) -> float:
        return -self.mass * self.omega**2


@dataclass(frozen=True)
class Quartic(Potential):
    """V = λ x⁴ / 4."""

    lam: float = 1.0
    tag = "quartic"

    def value(self, x):
        return 0.25 * self.lam * np.asarray(x, dtype=float) ** 4

    def d1(self, x):
        return self.lam * np.asarray(x, dtype=float) ** 3

    def d2(self, x):
        return 3.0 * self.lam * np.asarray(x, dtype=float) ** 2

    def d3(self, x):
        return 6.0 * self.lam * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class DoubleWell(Potential):
    """V = V₀ ((2x/L)² − 1)², minima at ±L/2 separated by the barrier V₀."""

    v0: float = 1.0
    separation: float = 2.0
    tag = "double_well"

    def __post_init__(self) -> None:
        if not self.separation > 0:
            raise NonPositiveParameter(
                f"double_well separation must be positive; got {self.separation}"
            )

    @property
    def _s2(self) -> float:
        return (2.0 / self.separation) ** 2

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.v0 * (self._s2 * x**2 - 1.0) ** 2

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return 4.0 * self.v0 * self._s2 * x * (self._s2 * x**2 - 1.0)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        return 4.0 * self.v0 * self._s2 * (3.0 * self._s2 * x**2 - 1.0)

    def d3(self, x):
        return 24.0 * self.v0 * self._s2**2 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Tabulated(Potential):
    """Cubic-spline interpolant through (nodes, values); extrapolates outside."""

    nodes: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()
    tag = "tabulated"

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(float(v) for v in self.nodes))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.nodes) < 4 or len(self.nodes) != len(self.values):
            raise ModelError(
                "tabulated potential needs at least 4 nodes and one value per node; "
                f"got {len(self.nodes)} nodes, {len(self.values)} values"
            )
        if np.any(np.diff(self.nodes) <= 0):
            raise ModelError("tabulated potential nodes must be strictly increasing")

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.nodes, self.values, bc_type="natural", extrapolate=True)

    def value(self, x):
        return self._spline(np.asarray(x, dtype=float))

    def d1(self, x):
        return self._spline(np.asarray(x, dtype=float), 1)

    def d2(self, x):
        return self._spline(np.asarray(x, dtype=float), 2)

    def d3(self, x):
        return self._spline(np.asarray(x, dtype=float), 3)


_CATALOG = {
    cls.tag: cls for cls in (Free, Harmonic, InvertedHarmonic, Quartic, DoubleWell, Tabulated)
}


# ────────────────────────────────────────────────────────────────────────────────
# Model parameters
# ────────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class QBMParams:
    """Quantum Brownian motion bath: dissipation γ and temperature kT."""

    gamma: float
    kT: float
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise NonPositiveParameter(f"gamma must be >= 0; got {self.gamma}")
        if not self.kT > 0:
            raise NonPositiveParameter(f"kT must be positive; got {self.kT}")
        if not self.m > 0:
            raise NonPositiveMass(f"mass must be positive; got {self.m}")
        if not self.hbar > 0:
            raise NonPositiveHbar(f"hbar must be positive; got {self.hbar}")

    @property
    def diffusion(self) -> float:
        """D = ħ²/(8 m γ kT)."""
        if self.gamma == 0:
            return math.inf
        return self.hbar**2 / (8.0 * self.m * self.gamma * self.kT)


@dataclass(frozen=True)
class LindbladModel:
    a: float
    b: float
    c: float
    m: float
    hbar: float
    potential: Potential = field(default_factory=Free)
    theta: float = 0.0
    qbm: Optional[QBMParams] = None

    def __post_init__(self) -> None:
        if not self.m > 0:
            raise NonPositiveMass(f"mass must be positive; got {self.m}")
        if not self.hbar > 0:
            raise NonPositiveHbar(f"hbar must be positive; got {self.hbar}")

    @property
    def phase(self) -> complex:
        return complex(np.exp(1j * self.theta))

    @property
    def hab(self) -> float:
        """ħab; the Langevin friction on ⟨p⟩ is 2ħab."""
        return self.hbar * self.a * self.b

    @property
    def is_standard(self) -> bool:
        return math.isclose(self.c, 0.5 * self.hab, rel_tol=1e-12, abs_tol=1e-15)

    def with_theta(self, theta: float) -> "LindbladModel":
        return dataclasses.replace(self, theta=float(theta))

    def with_potential(self, potential: Potential) -> "LindbladModel":
        return dataclasses.replace(self, potential=potential)

    def discretize(self, grid: Grid) -> "DiscreteModel":
        if not math.isclose(grid.hbar, self.hbar, rel_tol=1e-12):
            raise ModelError(f"grid hbar {grid.hbar} differs from model hbar {self.hbar}")
        return DiscreteModel(self, grid)

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "m": self.m,
            "hbar": self.hbar,
            "theta": self.theta,
            "potential": self.potential.describe(),
        }
        if self.qbm is not None:
            out["qbm"] = dataclasses.asdict(self.qbm)
        return out


class DiscreteModel:
    """A model bound to a grid, with batched operator kernels.

    Kernels act along ``axis`` (default: the last one) so the same code serves
    single states, stacks of trajectories and density-matrix columns.
    """

    def __init__(self, model: LindbladModel, grid: Grid):
        self.model = model
        self.grid = grid
        x = np.asarray(grid.x)
        self.x = x
        self.p = np.asarray(grid.p)
        self.v = np.asarray(model.potential.value(x), dtype=float)
        self.kinetic = self.p**2 / (2.0 * model.m)

    def _along(self, vec: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * arr.ndim
        shape[axis] = vec.shape[0]
        return vec.reshape(shape)

    def apply_x(self, arr: np.ndarray, axis: int = -1) -> np.ndarray:
        return self._along(self.x, arr, axis) * arr

    def apply_p(self, arr: np.ndarray, axis: int = -1, power: int = 1) -> np.ndarray:
        if axis in (-1, arr.ndim - 1):
            return _p_array(self.grid, arr, power)
        spectrum = np.fft.fft(arr, axis=axis)
        return np.fft.ifft(spectrum * self._along(self.p**power, arr, axis), axis=axis)

    def apply_h0(self, arr: np.ndarray, axis: int = -1) -> np.ndarray:
        spectrum = np.fft.fft(arr, axis=axis)
        kinetic = np.fft.ifft(spectrum * self._along(self.kinetic, arr, axis), axis=axis)
        return kinetic + self._along(self.v, arr, axis) * arr

    def apply_anticommutator(self, arr: np.ndarray, axis: int = -1) -> np.ndarray:
        """{x̂, p̂} applied to arr."""
        xp = self.apply_x(self.apply_p(arr, axis), axis)
        px = self.apply_p(self.apply_x(arr, axis), axis)
        return xp + px

    def apply_h(self, arr: np.ndarray, axis: int = -1) -> np.ndarray:
        out = self.apply_h0(arr, axis)
        if self.model.c != 0.0:
            out = out + self.model.c * self.apply_anticommutator(arr, axis)
        return out

    def apply_l(self, arr: np.ndarray, axis: int = -1) -> np.ndarray:
        m = self.model
        out = m.a * self.apply_x(arr, axis)
        if m.b != 0.0:
            out = out + 1j * m.b * self.apply_p(arr, axis)
        return m.phase * out

    def apply_l_dagger(self, arr: np.ndarray, axis: int = -1) -> np.ndarray:
        m = self.model
        out = m.a * self.apply_x(arr, axis)
        if m.b != 0.0:
            out = out - 1j * m.b * self.apply_p(arr, axis)
        return np.conj(m.phase) * out


# ────────────────────────────────────────────────────────────────────────────────
# Constructors
# ────────────────────────────────────────────────────────────────────────────────


def _check_mass_hbar(m: float, hbar: float) -> None:
    if not m > 0:
        raise NonPositiveMass(f"mass must be positive; got {m}")
    if not hbar > 0:
        raise NonPositiveHbar(f"hbar must be positive; got {hbar}")


def standard(
    a: float,
    b: float,
    m: float = 1.0,
    hbar: float = 1.0,
    potential: Optional[Potential] = None,
    *,
    theta: float = 0.0,
) -> LindbladModel:
    """Model with c = ħab/2. A negative ``a`` is absorbed into the phase of L."""
    _check_mass_hbar(m, hbar)
    if a < 0:
        a, b = -a, -b
    return LindbladModel(
        a=float(a),
        b=float(b),
        c=0.5 * hbar * a * b,
        m=float(m),
        hbar=float(hbar),
        potential=potential if potential is not None else Free(),
        theta=float(theta),
    )


def from_qbm(q: QBMParams, potential: Optional[Potential] = None) -> LindbladModel:
    """a = (2D)^{-1/2}, b = (2D)^{1/2} γ/ħ, c = γ/2 with D = ħ²/(8mγkT)."""
    if not q.gamma > 0:
        raise NonPositiveParameter(f"gamma must be positive for a QBM model; got {q.gamma}")
    d = q.diffusion
    a = (2.0 * d) ** -0.5
    b = (2.0 * d) ** 0.5 * q.gamma / q.hbar
    return LindbladModel(
        a=a,
        b=b,
        c=0.5 * q.gamma,
        m=q.m,
        hbar=q.hbar,
        potential=potential if potential is not None else Free(),
        qbm=q,
    )


def validity_ratio(model: LindbladModel, x_bar: float, delta_x2: float) -> float:
    """½(Δx)²|V'''(x̄)| / |V'(x̄)|: small means the quadratic expansion holds."""
    if delta_x2 < 0:
        raise ValueError(f"delta_x2 must be >= 0; got {delta_x2}")
    pot = model.potential
    numerator = 0.5 * delta_x2 * abs(float(pot.d3(np.array([x_bar]))[0]))
    denominator = abs(float(pot.d1(np.array([x_bar]))[0]))
    if denominator < EPS_FLOOR:
        return math.inf if numerator > 0 else 0.0
    return numerator / denominator

