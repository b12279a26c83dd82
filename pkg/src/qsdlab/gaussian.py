"""
Stationary Gaussian solutions and the reduced (quadratic-potential) moment flow.

A generalized coherent state is ψ(x) ∝ exp(−β(x − q)² + ipx/ħ).  Its shape
parameter β solves

    4(b² + i/(mħ)) ħ² β² + 4ħab β − (a² + iV''(x̄)/ħ) = 0

and fixes the stationary widths (σ_x², σ_p², R₀) about which every trajectory
localizes.  Only the root with Re β > 0 is normalizable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import AmbiguousRootWarning, ModelError, NoStableRoot, WrapWarning
from .hilbert import Grid, MomentState, WaveFunction
from .model import LindbladModel

__all__ = [
    "StationaryParams",
    "DeviationCoords",
    "solve_beta",
    "stationary_residuals",
    "gaussian_packet",
    "coherent_state",
    "superposition",
    "reduced_moment_flow",
    "deviation_from_moments",
    "moments_from_deviation",
]

EDGE_CLEARANCE_SIGMAS = 5.0


@dataclass(frozen=True)
class StationaryParams:
    beta: complex
    sigma_x2: float
    sigma_p2: float
    r0: float
    valid_at: float = 0.0
    hbar: float = 1.0
    ambiguous: bool = False
    roots: Tuple[complex, ...] = field(default=(), compare=False)
    residual: float = field(default=0.0, compare=False)

    @classmethod
    def from_beta(cls, beta: complex, hbar: float = 1.0, **kwargs) -> "StationaryParams":
        beta = complex(beta)
        if not beta.real > 0:
            raise ValueError(f"beta must have a positive real part; got {beta}")
        sigma_x2 = 1.0 / (4.0 * beta.real)
        r0 = -2.0 * hbar * sigma_x2 * beta.imag
        sigma_p2 = (0.25 * hbar**2 + r0**2) / sigma_x2
        return cls(beta, sigma_x2, sigma_p2, r0, hbar=hbar, **kwargs)

    @property
    def sigma_x(self) -> float:
        return math.sqrt(self.sigma_x2)

    @property
    def sigma_p(self) -> float:
        return math.sqrt(self.sigma_p2)

    def moments(self, q: float = 0.0, p: float = 0.0) -> MomentState:
        return MomentState(q, p, self.sigma_x2, self.sigma_p2, self.r0)


@dataclass(frozen=True)
class DeviationCoords:
    """(Δx)² = σ_x²(1+X), (Δp)² = σ_p²(1+Y), R = R₀(1+Z)."""

    x_dev: float
    y_dev: float
    z_dev: float

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.x_dev) < -1) or np.any(np.asarray(self.y_dev) < -1):
            raise ValueError(
                f"deviations X, Y must be >= -1 (nonnegative variances); "
                f"got X={self.x_dev}, Y={self.y_dev}"
            )


# ────────────────────────────────────────────────────────────────────────────────
# Reduced flow
# ────────────────────────────────────────────────────────────────────────────────


def _variance_flow(
    model: LindbladModel, v2: float, var_x: float, var_p: float, r: float
) -> Tuple[float, float, float]:
    a, b, c, m, hbar = model.a, model.b, model.c, model.m, model.hbar
    q = 0.25 * hbar**2
    d_var_x = 2.0 * r / m + 4.0 * c * var_x + 2.0 * b**2 * (q - r**2) - 2.0 * a**2 * var_x**2
    d_var_p = -2.0 * v2 * r - 4.0 * c * var_p + 2.0 * a**2 * (q - r**2) - 2.0 * b**2 * var_p**2
    d_r = var_p / m - v2 * var_x - 2.0 * a**2 * r * var_x - 2.0 * b**2 * r * var_p
    return d_var_x, d_var_p, d_r


def reduced_moment_flow(model: LindbladModel, state: MomentState) -> MomentState:
    """Drift of the five moments with V expanded to second order about ⟨x⟩."""
    pot = model.potential
    xs = np.array([state.x_mean])
    v1 = float(pot.d1(xs)[0])
    v2 = float(pot.d2(xs)[0])
    skew = 2.0 * model.c - model.hab
    d_x = state.p_mean / model.m + skew * state.x_mean
    d_p = -v1 - (2.0 * model.c + model.hab) * state.p_mean
    return MomentState(d_x, d_p, *_variance_flow(model, v2, state.var_x, state.var_p, state.r))


def stationary_residuals(model: LindbladModel, params: StationaryParams) -> Tuple[float, float, float]:
    """Time derivatives of ((Δx)², (Δp)², R) at the stationary widths; all ≈ 0."""
    v2 = float(model.potential.d2(np.array([params.valid_at]))[0])
    return _variance_flow(model, v2, params.sigma_x2, params.sigma_p2, params.r0)


# ────────────────────────────────────────────────────────────────────────────────
# Stationary solution
# ────────────────────────────────────────────────────────────────────────────────


def solve_beta(model: LindbladModel, x_bar: float = 0.0) -> StationaryParams:
    """Normalizable root of the stationary quadratic for β, with derived widths."""
    a, b, m, hbar = model.a, model.b, model.m, model.hbar
    if a == 0.0 and b == 0.0:
        raise ModelError("a = b = 0 has no localizing fixed point")
    v2 = float(model.potential.d2(np.array([x_bar]))[0])
    coeffs = [
        4.0 * (b**2 + 1j / (m * hbar)) * hbar**2,
        4.0 * hbar * a * b,
        -(a**2 + 1j * v2 / hbar),
    ]
    roots = tuple(complex(r) for r in np.roots(coeffs))
    stable = [r for r in roots if r.real > 0]
    if not stable:
        raise NoStableRoot(
            f"no root with Re(beta) > 0 at x_bar={x_bar}: roots={roots}",
            diagnostics={"roots": [[r.real, r.imag] for r in roots], "x_bar": x_bar},
        )

    def residual_of(beta: complex) -> float:
        trial = StationaryParams.from_beta(beta, hbar, valid_at=x_bar)
        return max(abs(v) for v in stationary_residuals(model, trial))

    ambiguous = len(stable) > 1
    if ambiguous:
        stable.sort(key=residual_of)
        warnings.warn(
            f"both roots {stable} are normalizable; picked the one with smaller residuals",
            AmbiguousRootWarning,
            stacklevel=2,
        )
    beta = stable[0]
    return StationaryParams.from_beta(
        beta,
        hbar,
        valid_at=float(x_bar),
        ambiguous=ambiguous,
        roots=roots,
        residual=residual_of(beta),
    )


# ────────────────────────────────────────────────────────────────────────────────
# Grid states
# ────────────────────────────────────────────────────────────────────────────────


def _check_clearance(grid: Grid, q: float, sigma_x: float) -> None:
    clearance = EDGE_CLEARANCE_SIGMAS * sigma_x
    if q - clearance < grid.x_min or q + clearance > grid.x_max:
        warnings.warn(
            f"packet at q={q:g} is within {EDGE_CLEARANCE_SIGMAS:g} sigma_x of the grid edge "
            f"[{grid.x_min:g}, {grid.x_max:g})",
            WrapWarning,
            stacklevel=3,
        )


def gaussian_packet(grid: Grid, beta: complex, q: float, p: float, hbar: float = 1.0) -> WaveFunction:
    """Normalized exp(−β(x−q)² + ipx/ħ); any β with Re β > 0."""
    beta = complex(beta)
    if not beta.real > 0:
        raise ValueError(f"beta must have a positive real part; got {beta}")
    _check_clearance(grid, q, math.sqrt(1.0 / (4.0 * beta.real)))
    x = np.asarray(grid.x)
    amps = np.exp(-beta * (x - q) ** 2 + 1j * p * x / hbar)
    return WaveFunction(grid, amps).normalize()


def coherent_state(
    grid: Grid, params: StationaryParams, q: float, p: float, hbar: Optional[float] = None
) -> WaveFunction:
    return gaussian_packet(grid, params.beta, q, p, params.hbar if hbar is None else hbar)


def superposition(
    grid: Grid,
    params: StationaryParams,
    centers: Sequence[Tuple[float, float]],
    weights: Optional[Sequence[complex]] = None,
) -> WaveFunction:
    """Normalized Σ w_k |ψ_{q_k p_k}⟩ (a cat state for two well-separated centers)."""
    if not centers:
        raise ValueError("superposition needs at least one center")
    weights = [1.0] * len(centers) if weights is None else list(weights)
    if len(weights) != len(centers):
        raise ValueError("one weight per center required")
    total = np.zeros(grid.n_points, dtype=np.complex128)
    for w, (q, p) in zip(weights, centers):
        total += w * coherent_state(grid, params, q, p).amplitudes
    return WaveFunction(grid, total).normalize()


# ────────────────────────────────────────────────────────────────────────────────
# Deviations
# ────────────────────────────────────────────────────────────────────────────────


def deviation_from_moments(params: StationaryParams, state: MomentState) -> DeviationCoords:
    z = state.r / params.r0 - 1.0 if params.r0 != 0.0 else math.nan
    return DeviationCoords(
        state.var_x / params.sigma_x2 - 1.0,
        state.var_p / params.sigma_p2 - 1.0,
        z,
    )


def moments_from_deviation(
    params: StationaryParams, dev: DeviationCoords, q: float = 0.0, p: float = 0.0
) -> MomentState:
    return MomentState(
        q,
        p,
        params.sigma_x2 * (1.0 + dev.x_dev),
        params.sigma_p2 * (1.0 + dev.y_dev),
        params.r0 * (1.0 + dev.z_dev),
    )
