"""
Phase-space Fokker–Planck equation for the weight f(q, p, t) of localized
trajectory centers.

    ∂f/∂t = −∂_q(v_q f) − ∂_p(v_p f) + d_qq ∂²_q f + d_pp ∂²_p f + d_pq ∂_q∂_p f

with v_q = p/m + (2c − ħab) q and v_p = −V'(q) − (2c + ħab) p, the drifts of
⟨x⟩ and ⟨p⟩, and constant diffusion coefficients taken from the noise
amplitudes of a stationary coherent state:

    d_pp = |σ(p, L)|²,   d_qq = |σ(x, L)|²,   d_pq = 2 Re σ(x, L) σ(p, L)*

The solver is a conservative finite-volume scheme: minmod-limited upwind
advection, centered diffusion with a mixed-derivative face stencil, Heun time
stepping and zero flux through every boundary face.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_continuous_lyapunov

from .diagnostics import IntegrationMonitor
from .errors import CFLViolation, ModelError, NegativeDiffusion
from .gaussian import StationaryParams
from .model import LindbladModel
from .utils.logging import StepProgress, get_logger

logger = get_logger("fokker_planck")

__all__ = [
    "PhaseSpaceLattice",
    "PhaseSpaceField",
    "FPCoefficients",
    "coefficients",
    "gaussian_field",
    "stationary_field",
    "stationary_covariance",
    "cfl_bound",
    "evolve_fp",
    "propagate_fp",
    "fp_propagator",
    "classical_orbit",
]

CFL_SAFETY = 0.4
PSD_TOLERANCE = 1e-10
MASS_TOLERANCE = 1e-8


@dataclass(frozen=True)
class PhaseSpaceLattice:
    """Uniform cell-centered lattice over [q_min, q_max] × [p_min, p_max]."""

    q_min: float
    q_max: float
    n_q: int
    p_min: float
    p_max: float
    n_p: int

    def __post_init__(self) -> None:
        if self.n_q < 3 or self.n_p < 3:
            raise ValueError(f"lattice needs at least 3 cells per axis; got {self.n_q}×{self.n_p}")
        if not (self.q_max > self.q_min and self.p_max > self.p_min):
            raise ValueError("lattice bounds must be increasing")

    @classmethod
    def covering(
        cls, mean: Sequence[float], cov: np.ndarray, n: int = 64, sigmas: float = 6.0
    ) -> "PhaseSpaceLattice":
        """Square-count lattice spanning ``sigmas`` standard deviations of a Gaussian."""
        sq, sp = math.sqrt(cov[0][0]), math.sqrt(cov[1][1])
        q0, p0 = mean
        return cls(q0 - sigmas * sq, q0 + sigmas * sq, n, p0 - sigmas * sp, p0 + sigmas * sp, n)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def q(self) -> np.ndarray:
        return self.q_min + (np.arange(self.n_q) + 0.5) * self.dq

    @property
    def p(self) -> np.ndarray:
        return self.p_min + (np.arange(self.n_p) + 0.5) * self.dp

    @property
    def q_edges(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.n_q + 1)

    @property
    def p_edges(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.n_p + 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_q, self.n_p)

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.q, self.p, indexing="ij")

    def index_of(self, q: float, p: float) -> Tuple[int, int]:
        iq = int(math.floor((q - self.q_min) / self.dq))
        ip = int(math.floor((p - self.p_min) / self.dp))
        return iq, ip


@dataclass(frozen=True)
class PhaseSpaceField:
    """Values f[iq, ip] on a lattice; mass = Σ f dq dp."""

    lattice: PhaseSpaceLattice
    values: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != self.lattice.shape:
            raise ValueError(f"field of shape {vals.shape} does not fit lattice {self.lattice.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.lattice.cell_area)

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    def normalized(self) -> "PhaseSpaceField":
        m = self.mass
        if m <= 0:
            raise ValueError(f"cannot normalize a field of mass {m}")
        return PhaseSpaceField(self.lattice, self.values / m)

    def marginal_q(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.lattice.dp

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.lattice.dq

    def mean(self) -> Tuple[float, float]:
        q, p = self.lattice.mesh()
        w = self.values * self.lattice.cell_area / self.mass
        return float(np.sum(w * q)), float(np.sum(w * p))

    def covariance(self) -> np.ndarray:
        q, p = self.lattice.mesh()
        w = self.values * self.lattice.cell_area / self.mass
        mq, mp = float(np.sum(w * q)), float(np.sum(w * p))
        cqq = np.sum(w * (q - mq) ** 2)
        cpp = np.sum(w * (p - mp) ** 2)
        cqp = np.sum(w * (q - mq) * (p - mp))
        return np.array([[cqq, cqp], [cqp, cpp]])

    def l1_distance(self, other: "PhaseSpaceField") -> float:
        if other.lattice != self.lattice:
            raise ValueError("fields live on different lattices")
        return float(np.sum(np.abs(self.values - other.values)) * self.lattice.cell_area)

    def peak(self) -> Tuple[float, float]:
        iq, ip = np.unravel_index(int(np.argmax(self.values)), self.lattice.shape)
        return float(self.lattice.q[iq]), float(self.lattice.p[ip])

    def cell_mass(self, q_range: Tuple[float, float], p_range: Tuple[float, float]) -> float:
        """Mass of the cells whose centers fall inside the rectangle."""
        q, p = self.lattice.mesh()
        inside = (q >= q_range[0]) & (q < q_range[1]) & (p >= p_range[0]) & (p < p_range[1])
        return float(self.values[inside].sum() * self.lattice.cell_area)


# ────────────────────────────────────────────────────────────────────────────────
# Coefficients
# ────────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class FPCoefficients:
    d_pp: float
    d_qq: float
    d_pq: float
    q_skew: float
    p_friction: float
    mass: float
    high_t_ratio: Optional[float] = None

    def diffusion_matrix(self) -> np.ndarray:
        return np.array([[self.d_qq, 0.5 * self.d_pq], [0.5 * self.d_pq, self.d_pp]])

    def drift_matrix(self, v2: float) -> np.ndarray:
        """Jacobian of (v_q, v_p) for a locally quadratic potential."""
        return np.array([[self.q_skew, 1.0 / self.mass], [-v2, -self.p_friction]])

    def with_diffusion(self, d_pp: float = 0.0, d_qq: float = 0.0, d_pq: float = 0.0) -> "FPCoefficients":
        return FPCoefficients(d_pp, d_qq, d_pq, self.q_skew, self.p_friction, self.mass, self.high_t_ratio)


def coefficients(model: LindbladModel, params: StationaryParams) -> FPCoefficients:
    """Diffusion coefficients from the stationary widths, drifts from the model."""
    a, b, hbar = model.a, model.b, model.hbar
    sx2, sp2, r0 = params.sigma_x2, params.sigma_p2, params.r0
    sigma_x_l = complex(a * sx2 - 0.5 * hbar * b, b * r0)
    sigma_p_l = complex(a * r0, b * sp2 - 0.5 * hbar * a)
    d_pp = abs(sigma_p_l) ** 2
    d_qq = abs(sigma_x_l) ** 2
    d_pq = 2.0 * (sigma_x_l * sigma_p_l.conjugate()).real

    det = d_qq * d_pp - 0.25 * d_pq**2
    scale = max(d_qq * d_pp, 1e-300)
    if det < -PSD_TOLERANCE * scale:
        raise NegativeDiffusion(
            f"diffusion matrix is not positive semidefinite: d_qq={d_qq:.6g}, d_pp={d_pp:.6g}, "
            f"d_pq={d_pq:.6g}; check the stationary parameters",
            diagnostics={"d_qq": d_qq, "d_pp": d_pp, "d_pq": d_pq, "det": det},
        )
    ratio = None
    q = model.qbm
    if q is not None and q.gamma > 0 and q.kT > 0:
        ratio = d_pp / (2.0 * q.m * q.gamma * q.kT)
    return FPCoefficients(
        d_pp=d_pp,
        d_qq=d_qq,
        d_pq=d_pq,
        q_skew=2.0 * model.c - model.hab,
        p_friction=2.0 * model.c + model.hab,
        mass=model.m,
        high_t_ratio=ratio,
    )


# ────────────────────────────────────────────────────────────────────────────────
# Reference fields
# ────────────────────────────────────────────────────────────────────────────────


def gaussian_field(lattice: PhaseSpaceLattice, mean: Sequence[float], cov: np.ndarray) -> PhaseSpaceField:
    cov = np.asarray(cov, dtype=float)
    inv = np.linalg.inv(cov)
    q, p = lattice.mesh()
    dq, dp = q - mean[0], p - mean[1]
    quad = inv[0, 0] * dq**2 + 2.0 * inv[0, 1] * dq * dp + inv[1, 1] * dp**2
    return PhaseSpaceField(lattice, np.exp(-0.5 * quad)).normalized()


def stationary_field(model: LindbladModel, lattice: PhaseSpaceLattice) -> PhaseSpaceField:
    """Maxwell–Boltzmann weight exp(−p²/2mkT − V(q)/kT) for a Brownian-motion model."""
    if model.qbm is None:
        raise ModelError("the Maxwell-Boltzmann field needs a model built from QBM parameters")
    kT = model.qbm.kT
    q, p = lattice.mesh()
    expo = -(p**2) / (2.0 * model.m * kT) - model.potential.value(q) / kT
    return PhaseSpaceField(lattice, np.exp(expo - expo.max())).normalized()


def stationary_covariance(coeffs: FPCoefficients, model: LindbladModel, x_bar: float = 0.0) -> np.ndarray:
    """Steady covariance of the linearized flow: A Σ + Σ Aᵀ + 2D = 0."""
    v2 = float(model.potential.d2(np.array([x_bar]))[0])
    drift = coeffs.drift_matrix(v2)
    if np.any(np.linalg.eigvals(drift).real >= 0):
        raise ModelError(f"linearized drift at x={x_bar} has no stable fixed point (V''={v2:g})")
    return solve_continuous_lyapunov(drift, -2.0 * coeffs.diffusion_matrix())


def classical_orbit(
    coeffs: FPCoefficients, model: LindbladModel, q0: float, p0: float, times: Sequence[float]
) -> np.ndarray:
    """Drift-only orbit (q(t), p(t)) at ``times``; shape (len(times), 2)."""
    times = np.asarray(times, dtype=float)
    pot = model.potential

    def rhs(_t, y):
        q, p = y
        return [p / coeffs.mass + coeffs.q_skew * q, -float(pot.d1(np.array([q]))[0]) - coeffs.p_friction * p]

    if times.size == 0 or times[-1] == 0.0:
        return np.tile([q0, p0], (times.size, 1)).astype(float)
    sol = solve_ivp(rhs, (0.0, float(times[-1])), [q0, p0], t_eval=times, rtol=1e-9, atol=1e-12)
    return sol.y.T


# ────────────────────────────────────────────────────────────────────────────────
# Finite-volume solver
# ────────────────────────────────────────────────────────────────────────────────


def _velocities(coeffs: FPCoefficients, model: LindbladModel, lattice: PhaseSpaceLattice):
    q_faces = lattice.q_edges[1:-1]
    p_faces = lattice.p_edges[1:-1]
    v_q = lattice.p[None, :] / coeffs.mass + coeffs.q_skew * q_faces[:, None]  # (n_q-1, n_p)
    v_p = -model.potential.d1(lattice.q)[:, None] - coeffs.p_friction * p_faces[None, :]  # (n_q, n_p-1)
    return v_q, v_p


def cfl_bound(coeffs: FPCoefficients, model: LindbladModel, lattice: PhaseSpaceLattice) -> float:
    """0.4 × min(advective, diffusive) explicit step limit."""
    v_q, v_p = _velocities(coeffs, model, lattice)
    adv = float(np.max(np.abs(v_q))) / lattice.dq + float(np.max(np.abs(v_p))) / lattice.dp
    diff = (
        2.0 * coeffs.d_qq / lattice.dq**2
        + 2.0 * coeffs.d_pp / lattice.dp**2
        + abs(coeffs.d_pq) / (lattice.dq * lattice.dp)
    )
    bounds = [1.0 / x for x in (adv, diff) if x > 0]
    if not bounds:
        return math.inf
    return CFL_SAFETY * min(bounds)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _upwind_flux(f: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """MUSCL/minmod upwind flux on interior faces along axis 0."""
    d = np.diff(f, axis=0)
    slope = np.zeros_like(f)
    slope[1:-1] = _minmod(d[:-1], d[1:])
    left = f[:-1] + 0.5 * slope[:-1]
    right = f[1:] - 0.5 * slope[1:]
    return np.maximum(vel, 0.0) * left + np.minimum(vel, 0.0) * right


def _divergence(flux: np.ndarray, h: float) -> np.ndarray:
    """−∂F for interior-face fluxes along axis 0, zero flux at both walls."""
    pad = [(1, 1)] + [(0, 0)] * (flux.ndim - 1)
    full = np.pad(flux, pad)
    return -(full[1:] - full[:-1]) / h


def _make_rhs(coeffs: FPCoefficients, model: LindbladModel, lattice: PhaseSpaceLattice):
    v_q, v_p = _velocities(coeffs, model, lattice)
    dq, dp = lattice.dq, lattice.dp
    half_cross = 0.5 * coeffs.d_pq

    def rhs(f: np.ndarray) -> np.ndarray:
        grad_q = np.gradient(f, dq, axis=0)
        grad_p = np.gradient(f, dp, axis=1)
        # q faces
        flux_q = _upwind_flux(f, v_q)
        flux_q -= coeffs.d_qq * np.diff(f, axis=0) / dq
        flux_q -= half_cross * 0.5 * (grad_p[:-1] + grad_p[1:])
        # p faces (transpose so the face axis is first)
        flux_p = _upwind_flux(f.T, v_p.T)
        flux_p -= coeffs.d_pp * np.diff(f.T, axis=0) / dp
        flux_p -= half_cross * 0.5 * (grad_q.T[:-1] + grad_q.T[1:])
        return _divergence(flux_q, dq) + _divergence(flux_p, dp).T

    return rhs


def propagate_fp(
    coeffs: FPCoefficients,
    model: LindbladModel,
    f0: PhaseSpaceField,
    times: Sequence[float],
    dt: Optional[float] = None,
    *,
    monitor: Optional[IntegrationMonitor] = None,
) -> List[PhaseSpaceField]:
    """f at each of ``times`` (ascending, ≥ 0) with Heun steps."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError(f"times must be ascending and nonnegative; got {times}")
    lattice = f0.lattice
    bound = cfl_bound(coeffs, model, lattice)
    monitor = monitor or IntegrationMonitor("fokker_planck", negativity_tolerance=1e-10)
    if dt is None:
        if not math.isfinite(bound):
            raise ValueError("field has neither drift nor diffusion; pass dt explicitly")
        dt = bound
    elif dt > bound * (1 + 1e-12):
        payload = monitor.report_error("CFLViolation", f"dt={dt:.3e} exceeds the CFL bound {bound:.3e}")
        raise CFLViolation(
            f"dt={dt:.3e} exceeds the explicit CFL bound {bound:.3e}; reduce dt or coarsen the lattice",
            diagnostics=payload,
        )

    rhs = _make_rhs(coeffs, model, lattice)
    f = np.array(f0.values)
    mass0 = f0.mass
    t_now = 0.0
    out: List[PhaseSpaceField] = []
    monitor.start()
    total = sum(max(1, math.ceil((t2 - t1) / dt - 1e-9)) for t1, t2 in zip([0.0] + times, times) if t2 > t1)
    progress = StepProgress(logger, "fokker-planck Heun", total)
    step = 0
    for target in times:
        span = target - t_now
        n_steps = max(1, int(math.ceil(span / dt - 1e-9))) if span > 0 else 0
        h = span / n_steps if n_steps else 0.0
        for _ in range(n_steps):
            f1 = f + h * rhs(f)
            f = 0.5 * (f + f1 + h * rhs(f1))
            t_now += h
            step += 1
            monitor.observe_step(t_now)
            drift = abs(f.sum() * lattice.cell_area - mass0)
            monitor.observe_norm(drift)
            monitor.observe_minimum(float(f.min()))
            progress.update(step, t=t_now, mass_drift=drift)
        t_now = target
        out.append(PhaseSpaceField(lattice, f))
    progress.done()
    if monitor.max_norm_drift > MASS_TOLERANCE * max(1.0, t_now):
        logger.warning(f"fokker-planck mass drift {monitor.max_norm_drift:.3e} over t={t_now:.4g}")
    logger.debug(f"fokker-planck finished: {monitor.snapshot()}")
    return out


def evolve_fp(
    coeffs: FPCoefficients,
    model: LindbladModel,
    f0: PhaseSpaceField,
    t: float,
    dt: Optional[float] = None,
    **kwargs,
) -> PhaseSpaceField:
    if t == 0:
        return f0
    return propagate_fp(coeffs, model, f0, [t], dt, **kwargs)[0]


def fp_propagator(
    coeffs: FPCoefficients,
    model: LindbladModel,
    lattice: PhaseSpaceLattice,
    start: Tuple[float, float],
    t1: float,
    t2: float,
    dt: Optional[float] = None,
) -> PhaseSpaceField:
    """f(q₂, p₂, t₂ | q₁, p₁, t₁) from a normalized single-cell impulse."""
    iq, ip = lattice.index_of(*start)
    if not (0 < iq < lattice.n_q - 1 and 0 < ip < lattice.n_p - 1):
        raise ValueError(f"start point {start} is not in the lattice interior")
    impulse = np.zeros(lattice.shape)
    impulse[iq, ip] = 1.0 / lattice.cell_area
    return evolve_fp(coeffs, model, PhaseSpaceField(lattice, impulse), t2 - t1, dt)
