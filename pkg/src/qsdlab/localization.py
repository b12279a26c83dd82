"""
Localization diagnostics built on A = p̂ − 2iħβx̂.

Generalized coherent states are exactly the eigenstates of A, so the
dispersion (ΔA)² = σ(A, A) measures the distance of a state from the
stationary family.  Its mean drift is nonpositive for quadratic potentials;
this module evaluates that drift in both the expanded and the regrouped form,
estimates localization rates and checks the decay on trajectory ensembles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import ScopeWarning
from .gaussian import (
    DeviationCoords,
    StationaryParams,
    moments_from_deviation,
    reduced_moment_flow,
    solve_beta,
)
from .hilbert import WaveFunction, _p_array
from .model import LindbladModel
from .utils.logging import get_logger

logger = get_logger("localization")

__all__ = [
    "DeviationCoords",
    "RateEstimate",
    "LinearCoefficients",
    "LocalizationCurve",
    "LocalizationReport",
    "delta_A2",
    "delta_A2_from_moments",
    "delta_A2_from_deviation",
    "linear_coefficients",
    "dA2_drift",
    "dA2_drift_expanded",
    "dA2_drift_from_flow",
    "sample_admissible_deviations",
    "estimate_rates",
    "verify_localization",
    "isotonic_r2",
]

ArrayLike = Union[float, np.ndarray]

ISOTONIC_MIN_R2 = 0.95
ENVELOPE_FLOOR = 0.05  # in units of σ_p²


# ────────────────────────────────────────────────────────────────────────────────
# (ΔA)²
# ────────────────────────────────────────────────────────────────────────────────


def delta_A2(psi: WaveFunction, params: StationaryParams, hbar: Optional[float] = None) -> float:
    """σ(A, A) = ‖(A − ⟨A⟩)ψ‖² evaluated on the grid."""
    hbar = params.hbar if hbar is None else hbar
    grid = psi.grid
    amps = psi.amplitudes
    a_psi = _p_array(grid, amps) - 2j * hbar * params.beta * grid.x * amps
    mean = np.vdot(amps, a_psi) * grid.dx
    return float(np.sum(np.abs(a_psi - mean * amps) ** 2) * grid.dx)


def delta_A2_from_moments(
    var_x: ArrayLike, var_p: ArrayLike, r: ArrayLike, beta: complex, hbar: float = 1.0
) -> ArrayLike:
    """(Δp)² + 4ħ²|β|²(Δx)² + 4ħ Im β R − 2ħ² Re β; exact for any state."""
    beta = complex(beta)
    return (
        var_p
        + 4.0 * hbar**2 * abs(beta) ** 2 * var_x
        + 4.0 * hbar * beta.imag * r
        - 2.0 * hbar**2 * beta.real
    )


def delta_A2_from_deviation(params: StationaryParams, dev: DeviationCoords) -> ArrayLike:
    """σ_p²(X + Y) − (2R₀²/σ_x²) Z."""
    return params.sigma_p2 * (dev.x_dev + dev.y_dev) - 2.0 * params.r0**2 / params.sigma_x2 * dev.z_dev


# ────────────────────────────────────────────────────────────────────────────────
# Drift of (ΔA)²
# ────────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class LinearCoefficients:
    """Linear drift coefficients, both as first written and after simplification.

    ``c1_raw``/``c2_raw``/``c3_raw`` carry V''(x̄) and the coupling explicitly;
    ``c1``/``c2``/``c3`` use the stationary relations.  They agree whenever the
    params solve the stationary equations.
    """

    c1_raw: float
    c2_raw: float
    c3_raw: float
    c1: float
    c2: float
    c3: float


def linear_coefficients(params: StationaryParams, model: LindbladModel) -> LinearCoefficients:
    a, b, m, hbar = model.a, model.b, model.m, model.hbar
    sx2, sp2, r0 = params.sigma_x2, params.sigma_p2, params.r0
    v2 = float(model.potential.d2(np.array([params.valid_at]))[0])
    hab = hbar * a * b
    ratio = sp2 / sx2

    c1_raw = -(hbar**2) * a**2 + 2.0 * hab * sp2 + 2.0 * r0 * v2
    c2_raw = -2.0 * hab * sp2 - 2.0 * r0 / m * ratio - hbar**2 * b**2 * ratio
    c3_raw = 2.0 * r0 / m * ratio - 2.0 * r0 * v2

    c1 = -0.5 * hbar**2 * a**2 - 2.0 * a**2 * r0**2 - 2.0 * b**2 * sp2**2
    c2 = -2.0 * a**2 * sx2 * sp2 - 2.0 * b**2 * sp2**2
    c3 = -2.0 * r0**2 / (sx2 * sp2) * c1
    return LinearCoefficients(c1_raw, c2_raw, c3_raw, c1, c2, c3)


def dA2_drift_expanded(params: StationaryParams, dev: DeviationCoords, model: LindbladModel) -> ArrayLike:
    """M d(ΔA)²/dt as linear terms in (X, Y, Z) plus the quadratic form."""
    a, b, hbar = model.a, model.b, model.hbar
    sx2, sp2, r0 = params.sigma_x2, params.sigma_p2, params.r0
    X, Y, Z = dev.x_dev, dev.y_dev, dev.z_dev
    k = linear_coefficients(params, model)
    ratio = sp2 / sx2
    return (
        k.c1_raw * X
        + k.c2_raw * Y
        + k.c3_raw * Z
        - 2.0 * a**2 * (r0**2 + 0.25 * hbar**2) * X**2
        - 2.0 * b**2 * sp2**2 * Y**2
        - 2.0 * r0**2 * (a**2 + b**2 * ratio) * Z**2
        + 4.0 * a**2 * r0**2 * X * Z
        + 4.0 * b**2 * ratio * r0**2 * Y * Z
    )


def dA2_drift(params: StationaryParams, dev: DeviationCoords, model: LindbladModel) -> ArrayLike:
    """M d(ΔA)²/dt regrouped as (c₁/σ_p²)(ΔA)² minus a sum of squares."""
    a, b, hbar = model.a, model.b, model.hbar
    sx2, sp2, r0 = params.sigma_x2, params.sigma_p2, params.r0
    X, Y, Z = dev.x_dev, dev.y_dev, dev.z_dev
    c1 = linear_coefficients(params, model).c1
    return (
        c1 / sp2 * delta_A2_from_deviation(params, dev)
        - 0.5 * hbar**2 * a**2 * X**2
        - 2.0 * a**2 * r0**2 * (X - Z) ** 2
        - 2.0 * b**2 * sp2**2 * (Y - r0**2 / (sp2 * sx2) * Z) ** 2
        - hbar**2 * b**2 * r0**2 / (2.0 * sx2**2) * Z**2
    )


def dA2_drift_from_flow(params: StationaryParams, dev: DeviationCoords, model: LindbladModel) -> float:
    """Same drift, obtained by pushing the reduced moment flow through (ΔA)²."""
    state = moments_from_deviation(params, dev, q=params.valid_at)
    flow = reduced_moment_flow(model, state)
    beta, hbar = complex(params.beta), params.hbar
    return float(
        flow.var_p + 4.0 * hbar**2 * abs(beta) ** 2 * flow.var_x + 4.0 * hbar * beta.imag * flow.r
    )


def sample_admissible_deviations(
    params: StationaryParams,
    n: int,
    *,
    seed: int = 0,
    x_range: tuple = (-1.0, 4.0),
    y_range: tuple = (-1.0, 4.0),
    z_range: tuple = (-4.0, 4.0),
) -> DeviationCoords:
    """Uniform (X, Y, Z) from a box, kept only where (Δx)²(Δp)² − R² ≥ ħ²/4."""
    rng = np.random.default_rng(seed)
    q = 0.25 * params.hbar**2
    kept: List[np.ndarray] = []
    have = 0
    while have < n:
        batch = max(2 * (n - have), 1024)
        X = rng.uniform(*x_range, size=batch)
        Y = rng.uniform(*y_range, size=batch)
        Z = rng.uniform(*z_range, size=batch)
        var_x = params.sigma_x2 * (1 + X)
        var_p = params.sigma_p2 * (1 + Y)
        r = params.r0 * (1 + Z)
        ok = var_x * var_p - r**2 >= q
        chunk = np.stack([X[ok], Y[ok], Z[ok]])
        kept.append(chunk)
        have += chunk.shape[1]
    xyz = np.concatenate(kept, axis=1)[:, :n]
    return DeviationCoords(xyz[0], xyz[1], xyz[2])


# ────────────────────────────────────────────────────────────────────────────────
# Rates
# ────────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RateEstimate:
    tau: float
    tau_thermal: Optional[float] = None
    tau_superposition: Optional[float] = None
    tau_decoherence: Optional[float] = None

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {
            "tau": self.tau,
            "tau_thermal": self.tau_thermal,
            "tau_superposition": self.tau_superposition,
            "tau_decoherence": self.tau_decoherence,
        }


def estimate_rates(
    params: StationaryParams, model: LindbladModel, ell: Optional[float] = None
) -> RateEstimate:
    """τ = (2a²σ_x² + 2b²σ_p²)⁻¹ plus the superposition and thermal scales."""
    rate = 2.0 * model.a**2 * params.sigma_x2 + 2.0 * model.b**2 * params.sigma_p2
    tau = 1.0 / rate if rate > 0 else math.inf
    tau_sup = None
    if ell is not None and ell > 0 and model.a != 0:
        tau_sup = 1.0 / (ell**2 * model.a**2)
    tau_thermal = tau_dec = None
    q = model.qbm
    if q is not None and q.gamma > 0:
        tau_thermal = math.sqrt(q.hbar / (q.gamma * q.kT))
        if ell is not None and ell > 0:
            tau_dec = q.hbar**2 / (ell**2 * q.m * q.gamma * q.kT)
    return RateEstimate(tau, tau_thermal, tau_sup, tau_dec)


# ────────────────────────────────────────────────────────────────────────────────
# Ensemble verification
# ────────────────────────────────────────────────────────────────────────────────


def isotonic_r2(values: Sequence[float]) -> float:
    """Share of variance explained by the best non-increasing fit."""
    y = np.asarray(values, dtype=float)
    if y.size < 2:
        return 1.0
    fit = isotonic_regression(y, increasing=False).x
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot


def _efold_time(times: np.ndarray, curve: np.ndarray) -> Optional[float]:
    target = curve[0] / math.e
    below = np.nonzero(curve <= target)[0]
    if curve[0] <= 0 or below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        return 0.0
    t0, t1 = times[k - 1], times[k]
    y0, y1 = curve[k - 1], curve[k]
    return float(t0 + (t1 - t0) * (y0 - target) / (y0 - y1)) if y0 != y1 else float(t1)


@dataclass
class LocalizationCurve:
    label: str
    times: np.ndarray
    mean_dA2: np.ndarray
    stderr_dA2: np.ndarray
    mean_var_x: np.ndarray
    isotonic_r2: float
    monotone: bool
    envelope_ok: bool
    max_envelope_excess: float
    efold_time: Optional[float]

    @property
    def passed(self) -> bool:
        return self.monotone and self.envelope_ok


@dataclass
class LocalizationReport:
    params: StationaryParams
    c1: float
    n_traj: int
    curves: List[LocalizationCurve] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.curves)


def verify_localization(
    model: LindbladModel,
    psi0_family: Sequence[WaveFunction],
    n_traj: int,
    t: float,
    dt: Optional[float] = None,
    seeds: Union[int, range] = 0,
    *,
    labels: Optional[Sequence[str]] = None,
    record_every: int = 1,
    threads: int = 1,
    params: Optional[StationaryParams] = None,
) -> LocalizationReport:
    """Check that ensemble-mean (ΔA)² decays, and stays under its exponential bound.

    Monotonicity allows for Monte Carlo noise: a non-increasing isotonic fit must
    explain at least 95% of the variance unless the curve never leaves the
    0.05σ_p² noise floor.
    """
    # imported here: ensemble builds on this module's (ΔA)² helpers
    from .ensemble import EnsembleSpec, run_ensemble

    report_warnings: List[str] = []
    if not model.potential.is_quadratic:
        message = (
            f"potential {model.potential.tag!r} is not quadratic; the decay of (ΔA)² "
            "is only spot-checked here"
        )
        warnings.warn(message, ScopeWarning, stacklevel=2)
        report_warnings.append(message)
    params = params or solve_beta(model)
    c1 = linear_coefficients(params, model).c1
    floor = ENVELOPE_FLOOR * params.sigma_p2
    base_seed = seeds.start if isinstance(seeds, range) else int(seeds)
    labels = list(labels) if labels is not None else [f"state_{k}" for k in range(len(psi0_family))]
    report = LocalizationReport(params=params, c1=c1, n_traj=n_traj, warnings=report_warnings)

    for label, psi0 in zip(labels, psi0_family):
        spec = EnsembleSpec(
            model=model,
            psi0=psi0,
            t=t,
            dt=dt,
            n_traj=n_traj,
            base_seed=base_seed,
            record_every=record_every,
            params=params,
        )
        records = run_ensemble(spec, threads=threads).records
        times = records[0].times
        stack = np.stack([rec.delta_A2 for rec in records])
        mean = stack.mean(axis=0)
        stderr = stack.std(axis=0, ddof=1) / math.sqrt(n_traj) if n_traj > 1 else np.zeros_like(mean)
        var_x = np.stack([rec.moment_array[:, 2] for rec in records]).mean(axis=0)

        r2 = isotonic_r2(mean)
        monotone = r2 >= ISOTONIC_MIN_R2 or float(np.max(mean)) <= floor
        envelope = mean[0] * np.exp(c1 * times / params.sigma_p2) * (1.0 + 5.0 / math.sqrt(n_traj)) + floor
        excess = float(np.max(mean - envelope))
        curve = LocalizationCurve(
            label=label,
            times=times,
            mean_dA2=mean,
            stderr_dA2=stderr,
            mean_var_x=var_x,
            isotonic_r2=r2,
            monotone=monotone,
            envelope_ok=excess <= 0.0,
            max_envelope_excess=excess,
            efold_time=_efold_time(times, mean),
        )
        logger.info(
            f"localization[{label}]: (ΔA)² {mean[0]:.4g} -> {mean[-1]:.4g}, "
            f"isotonic R²={r2:.3f}, envelope excess={excess:.3g}, e-fold={curve.efold_time}"
        )
        report.curves.append(curve)
    return report

