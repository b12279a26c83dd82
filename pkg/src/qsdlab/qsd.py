"""
Quantum state diffusion: the nonlinear Ito equation for one normalized state.

    dψ = [−(i/ħ)H + ⟨L†⟩L − ½L†L − ½|⟨L⟩|²] ψ dt + (L − ⟨L⟩) ψ dξ

with complex Wiener increments dξ = (dW₁ + i dW₂)/√2, M[dξ dξ*] = dt,
M[dξ²] = 0.  Expectations are taken on the incoming state (non-anticipating)
and the state is renormalized after every step.

Two schemes are provided.  ``"euler"`` is plain Euler–Maruyama on the whole
right-hand side.  ``"split"`` wraps that update in exact half-steps of the
free kinetic propagator, which keeps the stiff p̂²/2m term from amplifying
the highest lattice modes over long runs.  Both are weak order one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ModelError, NormCollapse, NoStableRoot, WrapWarning
from .gaussian import StationaryParams, solve_beta
from .hilbert import (
    EDGE_CELLS,
    WRAP_THRESHOLD,
    Grid,
    MomentState,
    Observable,
    WaveFunction,
    expectation,
    measure_moments,
    moments_array,
)
from .localization import delta_A2_from_moments, estimate_rates
from .model import DiscreteModel, LindbladModel
from .utils.logging import StepProgress, get_logger

logger = get_logger("qsd")

__all__ = [
    "NoiseProcess",
    "MomentState",
    "TrajectoryRecord",
    "DriftEstimate",
    "MomentDriftReport",
    "measure_moments",
    "ito_increment",
    "ito_step",
    "integrate_batch",
    "run_trajectory",
    "moment_drift_check",
    "default_timestep",
]

COLLAPSE_NORM = 1e-6
SCHEMES = ("euler", "split")


class NoiseProcess:
    """Seeded stream of complex increments dξ, one generator per trajectory.

    Draws are sequential, so the stream does not depend on how many steps are
    requested at a time.  ``rotation`` multiplies every increment by e^{i·rotation}.
    """

    def __init__(self, seed: int, *, rotation: float = 0.0):
        self.seed = int(seed)
        self.rotation = float(rotation)
        self._rng = np.random.default_rng(self.seed)
        self.drawn = 0

    def increments(self, dt: float, n: int = 1) -> np.ndarray:
        w = self._rng.standard_normal((n, 2)) * math.sqrt(0.5 * dt)
        self.drawn += n
        out = w[:, 0] + 1j * w[:, 1]
        if self.rotation:
            out = out * np.exp(1j * self.rotation)
        return out

    def __repr__(self) -> str:
        return f"NoiseProcess(seed={self.seed}, drawn={self.drawn})"


@dataclass
class TrajectoryRecord:
    seed: int
    times: np.ndarray
    moment_array: np.ndarray
    final_state: WaveFunction
    delta_A2: Optional[np.ndarray] = None
    snapshots: Dict[float, WaveFunction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.times.ndim != 1 or self.moment_array.shape != (self.times.size, 5):
            raise ValueError("times and moment_array lengths differ")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("record times must be strictly increasing")
        if self.delta_A2 is not None and self.delta_A2.shape != self.times.shape:
            raise ValueError("delta_A2 length differs from times")

    @property
    def moments(self) -> List[MomentState]:
        return [MomentState(*(float(v) for v in row)) for row in self.moment_array]

    @property
    def final_moments(self) -> MomentState:
        return MomentState(*(float(v) for v in self.moment_array[-1]))


# ────────────────────────────────────────────────────────────────────────────────
# Step kernels (batched along the leading axes)
# ────────────────────────────────────────────────────────────────────────────────


def _euler_update(
    dm: DiscreteModel, amps: np.ndarray, dt: float, dxi: np.ndarray, include_kinetic: bool
) -> np.ndarray:
    dx = dm.grid.dx
    hbar = dm.model.hbar
    l_psi = dm.apply_l(amps)
    l_mean = np.sum(np.conj(amps) * l_psi, axis=-1, keepdims=True) * dx
    ldl_psi = dm.apply_l_dagger(l_psi)
    if include_kinetic:
        h_psi = dm.apply_h(amps)
    else:
        h_psi = dm.v * amps
        if dm.model.c != 0.0:
            h_psi = h_psi + dm.model.c * dm.apply_anticommutator(amps)
    drift = (
        (-1j / hbar) * h_psi
        + np.conj(l_mean) * l_psi
        - 0.5 * ldl_psi
        - 0.5 * np.abs(l_mean) ** 2 * amps
    )
    noise = (l_psi - l_mean * amps) * np.asarray(dxi)[..., None]
    return amps + drift * dt + noise


def _kinetic_factor(dm: DiscreteModel, dt: float) -> np.ndarray:
    return np.exp(-0.5j * dt * dm.kinetic / dm.model.hbar)


def _raw_step(
    dm: DiscreteModel,
    amps: np.ndarray,
    dt: float,
    dxi: np.ndarray,
    scheme: str,
    half_kick: Optional[np.ndarray] = None,
) -> np.ndarray:
    if scheme == "euler":
        return _euler_update(dm, amps, dt, dxi, include_kinetic=True)
    if scheme == "split":
        kick = _kinetic_factor(dm, dt) if half_kick is None else half_kick
        amps = np.fft.ifft(np.fft.fft(amps, axis=-1) * kick, axis=-1)
        amps = _euler_update(dm, amps, dt, dxi, include_kinetic=False)
        return np.fft.ifft(np.fft.fft(amps, axis=-1) * kick, axis=-1)
    raise ValueError(f"unknown scheme {scheme!r}; use one of {SCHEMES}")


def _norms(grid: Grid, amps: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(amps) ** 2, axis=-1) * grid.dx)


def ito_increment(
    model: LindbladModel, psi: WaveFunction, dt: float, dxi: complex, *, scheme: str = "euler"
) -> np.ndarray:
    """ψ + dψ before renormalization."""
    if not dt > 0:
        raise ValueError(f"dt must be positive; got {dt}")
    dm = model.discretize(psi.grid)
    return _raw_step(dm, psi.amplitudes, dt, np.asarray(dxi), scheme)


def ito_step(
    model: LindbladModel, psi: WaveFunction, dt: float, dxi: complex, *, scheme: str = "euler"
) -> WaveFunction:
    """One Ito step followed by renormalization."""
    raw = ito_increment(model, psi, dt, dxi, scheme=scheme)
    norm = float(_norms(psi.grid, raw))
    if not norm >= COLLAPSE_NORM:
        raise NormCollapse(
            f"state norm fell to {norm:.3e} in one step of dt={dt:.3e}; reduce dt",
            diagnostics={"norm": norm, "dt": dt},
        )
    return WaveFunction(psi.grid, raw / norm)


# ────────────────────────────────────────────────────────────────────────────────
# Trajectories
# ────────────────────────────────────────────────────────────────────────────────


def _step_count(t: float, dt: float) -> tuple[int, float]:
    if t <= 0:
        return 0, dt
    n = int(round(t / dt))
    if n == 0 or abs(n * dt - t) > 1e-9 * max(t, dt):
        n = max(1, int(math.ceil(t / dt)))
    return n, t / n


def integrate_batch(
    model: LindbladModel,
    psi0: WaveFunction,
    noises: Sequence[NoiseProcess],
    t: float,
    dt: Optional[float] = None,
    record_every: int = 1,
    *,
    params: Optional[StationaryParams] = None,
    snapshot_times: Sequence[float] = (),
    scheme: str = "split",
    chunk_steps: int = 256,
) -> List[TrajectoryRecord]:
    """Integrate one trajectory per noise process, vectorized over the batch."""
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1; got {record_every}")
    grid = psi0.grid
    dm = model.discretize(grid)
    dt = default_timestep(model, grid, scheme=scheme) if dt is None else dt
    n_steps, h = _step_count(t, dt)
    batch = len(noises)
    amps = np.tile(psi0.amplitudes, (batch, 1))
    kick = _kinetic_factor(dm, h) if scheme == "split" else None

    record_steps = list(range(0, n_steps + 1, record_every))
    if record_steps[-1] != n_steps:
        record_steps.append(n_steps)
    record_set = set(record_steps)
    snap_steps = {min(n_steps, int(round(ts / h))) if n_steps else 0: ts for ts in snapshot_times}

    moments = [moments_array(grid, amps)]
    snaps: List[Dict[float, np.ndarray]] = [dict() for _ in range(batch)]
    if 0 in snap_steps:
        for j in range(batch):
            snaps[j][snap_steps[0]] = amps[j].copy()

    wrap_warned = False
    progress = StepProgress(logger, f"qsd batch x{batch}", n_steps)
    step = 0
    while step < n_steps:
        k = min(chunk_steps, n_steps - step)
        dxi = np.stack([nz.increments(h, k) for nz in noises], axis=1)  # (k, batch)
        for i in range(k):
            raw = _raw_step(dm, amps, h, dxi[i], scheme, kick)
            norms = _norms(grid, raw)
            bad = np.nonzero(~(norms >= COLLAPSE_NORM))[0]
            if bad.size:
                j = int(bad[0])
                raise NormCollapse(
                    f"trajectory seed={noises[j].seed} collapsed (norm {norms[j]:.3e}) at "
                    f"t={(step + 1) * h:.6g}; reduce dt (now {h:.3e})",
                    diagnostics={"seed": noises[j].seed, "step": step + 1, "dt": h},
                )
            amps = raw / norms[:, None]
            step += 1
            if step in record_set:
                moments.append(moments_array(grid, amps))
                if not wrap_warned:
                    weights = np.abs(amps) ** 2
                    edge = (weights[:, :EDGE_CELLS].sum(-1) + weights[:, -EDGE_CELLS:].sum(-1)) * grid.dx
                    if float(edge.max()) > WRAP_THRESHOLD:
                        wrap_warned = True
                        warnings.warn(
                            f"{float(edge.max()):.2e} of a trajectory's norm reached the grid edge "
                            f"at t={step * h:.4g}; widen the grid",
                            WrapWarning,
                            stacklevel=2,
                        )
            if step in snap_steps:
                for j in range(batch):
                    snaps[j][snap_steps[step]] = amps[j].copy()
        progress.update(step, t=step * h)
    progress.done()

    times = np.asarray(record_steps, dtype=float) * h
    stacked = np.stack(moments, axis=1)  # (batch, T, 5)
    records = []
    for j, nz in enumerate(noises):
        m_arr = stacked[j]
        d_a2 = None
        if params is not None:
            d_a2 = delta_A2_from_moments(m_arr[:, 2], m_arr[:, 3], m_arr[:, 4], params.beta, params.hbar)
        records.append(
            TrajectoryRecord(
                seed=nz.seed,
                times=times,
                moment_array=m_arr,
                final_state=WaveFunction(grid, amps[j]),
                delta_A2=d_a2,
                snapshots={ts: WaveFunction(grid, a) for ts, a in snaps[j].items()},
            )
        )
    return records


def run_trajectory(
    model: LindbladModel,
    psi0: WaveFunction,
    t: float,
    dt: Optional[float] = None,
    noise: Optional[NoiseProcess] = None,
    record_every: int = 1,
    **kwargs,
) -> TrajectoryRecord:
    """One trajectory; deterministic given (seed, dt, grid)."""
    noise = noise if noise is not None else NoiseProcess(0)
    return integrate_batch(model, psi0, [noise], t, dt, record_every, **kwargs)[0]


# ────────────────────────────────────────────────────────────────────────────────
# Moment drift conformance
# ────────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DriftEstimate:
    estimate: float
    stderr: float
    analytic: float
    allowance: float

    @property
    def z(self) -> float:
        spread = math.hypot(self.stderr, self.allowance)
        diff = self.estimate - self.analytic
        if spread == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return diff / spread


@dataclass
class MomentDriftReport:
    n_samples: int
    dt: float
    entries: Dict[str, DriftEstimate]

    @property
    def max_abs_z(self) -> float:
        return max(abs(e.z) for e in self.entries.values())

    def as_dict(self) -> Dict[str, Dict[str, float]]:
        return {
            name: {"estimate": e.estimate, "stderr": e.stderr, "analytic": e.analytic, "z": e.z}
            for name, e in self.entries.items()
        }


def analytic_moment_drift(model: LindbladModel, psi: WaveFunction) -> MomentState:
    """Exact mean drift of the five moments, potential terms evaluated on the grid."""
    m = measure_moments(psi)
    pot = model.potential
    a, b, c, mass, hbar = model.a, model.b, model.c, model.m, model.hbar
    dv = expectation(psi, Observable.DV, pot).real
    x_dv = expectation(psi, Observable.X_DV, pot).real
    p_dv = expectation(psi, Observable.P_DV_SYM, pot).real
    q = 0.25 * hbar**2
    return MomentState(
        m.p_mean / mass + (2.0 * c - model.hab) * m.x_mean,
        -dv - (2.0 * c + model.hab) * m.p_mean,
        2.0 * m.r / mass + 4.0 * c * m.var_x + 2.0 * b**2 * (q - m.r**2) - 2.0 * a**2 * m.var_x**2,
        -2.0 * (p_dv - m.p_mean * dv)
        - 4.0 * c * m.var_p
        + 2.0 * a**2 * (q - m.r**2)
        - 2.0 * b**2 * m.var_p**2,
        m.var_p / mass - (x_dv - m.x_mean * dv) - 2.0 * a**2 * m.r * m.var_x - 2.0 * b**2 * m.r * m.var_p,
    )


def moment_drift_check(
    model: LindbladModel,
    psi: WaveFunction,
    n_samples: int,
    dt: float,
    *,
    seed: int = 0,
    chunk: int = 4096,
    scheme: str = "euler",
) -> MomentDriftReport:
    """Monte Carlo mean of single-step moment increments versus the analytic drift.

    The z-score spread adds an allowance of 10·dt·(1 + |analytic|) for the
    O(dt) bias of a single explicit step, so deterministic limits (a = b = 0)
    compare sensibly.
    """
    grid = psi.grid
    dm = model.discretize(grid)
    rng = np.random.default_rng(seed)
    m0 = moments_array(grid, psi.amplitudes)
    total = np.zeros(5)
    total_sq = np.zeros(5)
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        amps = np.tile(psi.amplitudes, (k, 1))
        w = rng.standard_normal((k, 2)) * math.sqrt(0.5 * dt)
        raw = _raw_step(dm, amps, dt, w[:, 0] + 1j * w[:, 1], scheme)
        norms = _norms(grid, raw)
        if np.any(~(norms >= COLLAPSE_NORM)):
            raise NormCollapse(f"single-step norm collapse at dt={dt:.3e}; reduce dt")
        rate = (moments_array(grid, raw / norms[:, None]) - m0) / dt
        total += rate.sum(axis=0)
        total_sq += (rate**2).sum(axis=0)
        done += k

    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean**2, 0.0) * n_samples / max(n_samples - 1, 1)
    stderr = np.sqrt(var / n_samples)
    analytic = analytic_moment_drift(model, psi).as_tuple()
    entries = {
        name: DriftEstimate(
            float(mean[i]), float(stderr[i]), float(analytic[i]), 10.0 * dt * (1.0 + abs(analytic[i]))
        )
        for i, name in enumerate(MomentState.FIELDS)
    }
    report = MomentDriftReport(n_samples=n_samples, dt=dt, entries=entries)
    logger.debug(f"moment drift check: max |z| = {report.max_abs_z:.3f} over {n_samples} samples")
    return report


# ────────────────────────────────────────────────────────────────────────────────
# Step size
# ────────────────────────────────────────────────────────────────────────────────


def default_timestep(model: LindbladModel, grid: Grid, *, scheme: str = "split") -> float:
    """min(0.05ħ/E_max, 0.05τ, 0.25/Γ_max).

    E_max spans the potential on the grid plus the {x̂,p̂} term, and the kinetic
    scale for the plain Euler scheme.  Γ_max bounds the dissipative part so the
    explicit update stays contractive at the grid edge.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; use one of {SCHEMES}")
    x_abs = float(np.max(np.abs(grid.x)))
    e_max = float(np.ptp(model.potential.value(np.asarray(grid.x))))
    e_max += 2.0 * abs(model.c) * x_abs * grid.p_max
    if scheme == "euler":
        e_max += grid.kinetic_scale(model.m)
    bounds = []
    if e_max > 0:
        bounds.append(0.05 * model.hbar / e_max)
    try:
        tau = estimate_rates(solve_beta(model), model).tau
        if math.isfinite(tau):
            bounds.append(0.05 * tau)
    except (ModelError, NoStableRoot):
        pass
    gamma_max = (
        0.5 * model.a**2 * grid.length**2
        + 0.5 * model.b**2 * grid.p_max**2
        + abs(model.a * model.b) * grid.length * grid.p_max
    )
    if gamma_max > 0:
        bounds.append(0.25 / gamma_max)
    if not bounds:
        raise ValueError("cannot choose a default step: model has no time scale on this grid")
    return min(bounds)
