"""
Trajectory ensembles and what they reconstruct.

Trajectory j of an ensemble uses seed ``base_seed + j``; chunks of seeds are
integrated as one batch, fanned out over worker processes and re-ordered by
seed before any reduction, so every estimate is independent of the worker
count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import LocalizationWarning, ModelError, NoStableRoot
from .fokker_planck import PhaseSpaceField, PhaseSpaceLattice
from .gaussian import StationaryParams, solve_beta
from .hilbert import Grid, WaveFunction
from .localization import estimate_rates
from .master import DensityMatrix, evolve, mixture, pure_density, purity, trace_distance
from .model import LindbladModel
from .qsd import NoiseProcess, TrajectoryRecord, integrate_batch
from .utils.logging import get_logger
from .workers import run_tasks

logger = get_logger("ensemble")

__all__ = [
    "EnsembleSpec",
    "EnsembleResult",
    "run_ensemble",
    "reconstruct_rho",
    "reconstruct_mixture",
    "PhaseSpaceHistogram",
    "estimate_f",
    "PairCoherence",
    "DiagonalityReport",
    "coherent_diagonality",
    "husimi",
    "DualityReport",
    "compare_to_master",
    "density_from_field",
    "GaussianKernel",
    "thermal_density_exponents",
    "fit_gaussian_kernel",
]

LOCALIZED_AFTER_TAUS = 3.0


@dataclass(frozen=True)
class EnsembleSpec:
    model: LindbladModel
    psi0: WaveFunction
    t: float
    dt: Optional[float] = None
    n_traj: int = 2
    base_seed: int = 0
    record_every: int = 1
    params: Optional[StationaryParams] = None
    snapshot_times: Tuple[float, ...] = ()
    scheme: str = "split"
    chunk: int = 32

    def __post_init__(self) -> None:
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1; got {self.n_traj}")
        if self.t < 0:
            raise ValueError(f"t must be nonnegative; got {self.t}")
        object.__setattr__(self, "snapshot_times", tuple(float(s) for s in self.snapshot_times))

    @property
    def seeds(self) -> range:
        return range(self.base_seed, self.base_seed + self.n_traj)


def _integrate_chunk(payload: Tuple[EnsembleSpec, Tuple[int, ...]]) -> List[TrajectoryRecord]:
    spec, seeds = payload
    return integrate_batch(
        spec.model,
        spec.psi0,
        [NoiseProcess(s) for s in seeds],
        spec.t,
        spec.dt,
        spec.record_every,
        params=spec.params,
        snapshot_times=spec.snapshot_times,
        scheme=spec.scheme,
    )


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    records: List[TrajectoryRecord]

    @property
    def times(self) -> np.ndarray:
        return self.records[0].times

    def moment_stack(self) -> np.ndarray:
        """(n_traj, T, 5) moments of every trajectory in seed order."""
        return np.stack([rec.moment_array for rec in self.records])

    def time_index(self, at_time: float) -> int:
        times = self.times
        k = int(np.argmin(np.abs(times - at_time)))
        if abs(times[k] - at_time) > 1e-9 * max(1.0, abs(at_time)):
            raise ValueError(f"t={at_time} is not on the record lattice")
        return k

    def states_at(self, at_time: float) -> np.ndarray:
        """(n_traj, N) amplitudes at ``at_time`` (final time or a snapshot)."""
        if math.isclose(at_time, self.spec.t, rel_tol=1e-12, abs_tol=1e-12):
            return np.stack([rec.final_state.amplitudes for rec in self.records])
        for snap in self.spec.snapshot_times:
            if math.isclose(at_time, snap, rel_tol=1e-12, abs_tol=1e-12):
                return np.stack([rec.snapshots[snap].amplitudes for rec in self.records])
        raise ValueError(
            f"no stored states at t={at_time}; request it in snapshot_times "
            f"(stored: final t={self.spec.t}, snapshots {self.spec.snapshot_times})"
        )


def run_ensemble(spec: EnsembleSpec, threads: int = 1) -> EnsembleResult:
    seeds = list(spec.seeds)
    tasks = [
        (seeds[k], (spec, tuple(seeds[k : k + spec.chunk])))
        for k in range(0, len(seeds), max(1, spec.chunk))
    ]
    logger.info(
        f"ensemble: {spec.n_traj} trajectories, seeds {seeds[0]}..{seeds[-1]}, "
        f"t={spec.t:g}, {len(tasks)} chunks on {max(1, threads)} workers"
    )
    by_key = run_tasks(_integrate_chunk, tasks, threads=threads)
    records = [rec for key in sorted(by_key) for rec in by_key[key]]
    return EnsembleResult(spec, records)


def _as_result(source, threads: int) -> EnsembleResult:
    return source if isinstance(source, EnsembleResult) else run_ensemble(source, threads=threads)


# ────────────────────────────────────────────────────────────────────────────────
# Density matrix
# ────────────────────────────────────────────────────────────────────────────────


def _rho_from_states(grid: Grid, states: np.ndarray) -> DensityMatrix:
    rho = states.T @ states.conj() / states.shape[0]
    return DensityMatrix(grid, rho)


def reconstruct_rho(source, at_time: Optional[float] = None, *, threads: int = 1) -> DensityMatrix:
    """(1/n) Σ_j |ψ_j⟩⟨ψ_j| summed in seed order."""
    result = _as_result(source, threads)
    at_time = result.spec.t if at_time is None else at_time
    return _rho_from_states(result.spec.psi0.grid, result.states_at(at_time))


def reconstruct_mixture(
    model: LindbladModel,
    components: Sequence[WaveFunction],
    weights: Sequence[float],
    t: float,
    n_traj: int,
    *,
    dt: Optional[float] = None,
    base_seed: int = 0,
    threads: int = 1,
) -> DensityMatrix:
    """Σ w_k × (ensemble estimate from |k⟩), each on its own block of seeds."""
    if len(components) != len(weights) or not components:
        raise ValueError("one weight per component required")
    w = np.asarray(weights, dtype=float) / float(np.sum(weights))
    parts = []
    for k, psi in enumerate(components):
        spec = EnsembleSpec(model, psi, t, dt, n_traj=n_traj, base_seed=base_seed + k * n_traj)
        parts.append(reconstruct_rho(spec, threads=threads))
    return mixture(parts, list(w))


# ────────────────────────────────────────────────────────────────────────────────
# Phase-space weight
# ────────────────────────────────────────────────────────────────────────────────


@dataclass
class PhaseSpaceHistogram:
    q_edges: np.ndarray
    p_edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        area = np.outer(np.diff(self.q_edges), np.diff(self.p_edges))
        total = float(self.counts.sum())
        self.density = self.counts / (total * area) if total > 0 else np.zeros_like(area)

    @property
    def mass(self) -> float:
        area = np.outer(np.diff(self.q_edges), np.diff(self.p_edges))
        return float(np.sum(self.density * area))

    @property
    def occupied_bins(self) -> int:
        return int(np.count_nonzero(self.counts))

    def as_field(self) -> PhaseSpaceField:
        """Same values on a uniform lattice (edges must be uniform)."""
        lattice = PhaseSpaceLattice(
            float(self.q_edges[0]),
            float(self.q_edges[-1]),
            self.q_edges.size - 1,
            float(self.p_edges[0]),
            float(self.p_edges[-1]),
            self.p_edges.size - 1,
        )
        return PhaseSpaceField(lattice, self.density)


def _tau(model: LindbladModel) -> Optional[float]:
    try:
        return estimate_rates(solve_beta(model), model).tau
    except (ModelError, NoStableRoot):
        return None


def estimate_f(
    source,
    at_time: Optional[float] = None,
    bins: Tuple[int, int] = (32, 32),
    *,
    lattice: Optional[PhaseSpaceLattice] = None,
    threads: int = 1,
) -> PhaseSpaceHistogram:
    """Histogram of trajectory centers (⟨x⟩_j, ⟨p⟩_j), normalized to unit mass.

    ``lattice`` fixes the bins (e.g. to match a Fokker–Planck solution);
    otherwise the centers' span is padded by one stationary width per side.
    """
    result = _as_result(source, threads)
    spec = result.spec
    at_time = spec.t if at_time is None else at_time
    tau = _tau(spec.model)
    if tau is not None and at_time < LOCALIZED_AFTER_TAUS * tau:
        warnings.warn(
            f"t={at_time:g} is earlier than {LOCALIZED_AFTER_TAUS:g} localization times "
            f"(tau={tau:.3g}); trajectories may not be localized yet",
            LocalizationWarning,
            stacklevel=2,
        )
    k = result.time_index(at_time)
    centers = result.moment_stack()[:, k, :2]
    if lattice is not None:
        q_edges, p_edges = lattice.q_edges, lattice.p_edges
    else:
        params = spec.params
        if params is None:
            try:
                params = solve_beta(spec.model)
            except (ModelError, NoStableRoot):
                params = None
        pad_q = params.sigma_x if params else 1.0
        pad_p = params.sigma_p if params else 1.0
        q_edges = np.linspace(centers[:, 0].min() - pad_q, centers[:, 0].max() + pad_q, bins[0] + 1)
        p_edges = np.linspace(centers[:, 1].min() - pad_p, centers[:, 1].max() + pad_p, bins[1] + 1)
    counts, _, _ = np.histogram2d(centers[:, 0], centers[:, 1], bins=[q_edges, p_edges])
    return PhaseSpaceHistogram(q_edges, p_edges, counts)


# ────────────────────────────────────────────────────────────────────────────────
# Coherent-state probes
# ────────────────────────────────────────────────────────────────────────────────


def _coherent_rows(grid: Grid, beta: complex, q: float, ps: np.ndarray, hbar: float) -> np.ndarray:
    """Normalized ψ_{q,p}(x) for one q and many p; shape (len(ps), N)."""
    x = np.asarray(grid.x)
    envelope = np.exp(-beta * (x - q) ** 2)
    envelope /= math.sqrt(float(np.sum(np.abs(envelope) ** 2) * grid.dx))
    return envelope[None, :] * np.exp(1j * np.outer(ps, x) / hbar)


def _matrix_element(rho: DensityMatrix, bra: np.ndarray, ket: np.ndarray) -> complex:
    dx = rho.grid.dx
    return complex(np.conj(bra) @ rho.elements @ ket * dx * dx)


@dataclass(frozen=True)
class PairCoherence:
    first: Tuple[float, float]
    second: Tuple[float, float]
    ratio: Optional[float]
    separated: bool
    note: str = ""


@dataclass
class DiagonalityReport:
    pairs: List[PairCoherence]

    @property
    def max_ratio(self) -> float:
        vals = [p.ratio for p in self.pairs if p.separated and p.ratio is not None]
        return max(vals) if vals else 0.0

    @property
    def skipped(self) -> List[PairCoherence]:
        return [p for p in self.pairs if p.ratio is None]


def coherent_diagonality(
    rho: DensityMatrix,
    params: StationaryParams,
    probe_pairs: Sequence[Tuple[Tuple[float, float], Tuple[float, float]]],
    *,
    separation: float = 10.0,
) -> DiagonalityReport:
    """|⟨ψ_qp|ρ|ψ_q'p'⟩| over the geometric mean of the two diagonal elements."""
    grid, hbar = rho.grid, params.hbar
    out = []
    for (q1, p1), (q2, p2) in probe_pairs:
        a = _coherent_rows(grid, params.beta, q1, np.array([p1]), hbar)[0]
        b = _coherent_rows(grid, params.beta, q2, np.array([p2]), hbar)[0]
        d1 = _matrix_element(rho, a, a).real
        d2 = _matrix_element(rho, b, b).real
        far = abs(q1 - q2) >= separation * params.sigma_x or abs(p1 - p2) >= separation * params.sigma_p
        if d1 < 1e-12 or d2 < 1e-12:
            out.append(PairCoherence((q1, p1), (q2, p2), None, far, "degenerate diagonal"))
            continue
        ratio = abs(_matrix_element(rho, a, b)) / math.sqrt(d1 * d2)
        out.append(PairCoherence((q1, p1), (q2, p2), ratio, far))
    return DiagonalityReport(out)


def husimi(rho: DensityMatrix, params: StationaryParams, lattice: PhaseSpaceLattice) -> PhaseSpaceField:
    """Q(q, p) = ⟨ψ_qp|ρ|ψ_qp⟩/(2πħ), normalized on the lattice."""
    grid, hbar = rho.grid, params.hbar
    dx = grid.dx
    values = np.empty(lattice.shape)
    for i, q in enumerate(lattice.q):
        rows = _coherent_rows(grid, params.beta, float(q), lattice.p, hbar)
        values[i] = np.einsum("ai,ij,aj->a", rows.conj(), rho.elements, rows).real * dx * dx
    return PhaseSpaceField(lattice, values / (2.0 * math.pi * hbar)).normalized()


def density_from_field(f: PhaseSpaceField, params: StationaryParams, grid: Grid) -> DensityMatrix:
    """ρ = ∫ f(q, p) |ψ_qp⟩⟨ψ_qp| dq dp as a Riemann sum over the lattice."""
    lattice = f.lattice
    total = np.zeros((grid.n_points, grid.n_points), dtype=np.complex128)
    for i, q in enumerate(lattice.q):
        weights = f.values[i] * lattice.cell_area
        if not np.any(weights):
            continue
        rows = _coherent_rows(grid, params.beta, float(q), lattice.p, params.hbar)
        total += rows.T @ (weights[:, None] * rows.conj())
    return DensityMatrix(grid, total).normalized()


# ────────────────────────────────────────────────────────────────────────────────
# Master-equation comparison
# ────────────────────────────────────────────────────────────────────────────────


@dataclass
class DualityReport:
    trace_distance: float
    n_values: List[int]
    distances: List[float]
    slope: Optional[float]
    purity_ensemble: float
    purity_master: float

    def as_dict(self) -> Dict[str, object]:
        return {
            "trace_distance": self.trace_distance,
            "n_values": self.n_values,
            "distances": self.distances,
            "slope": self.slope,
            "purity_ensemble": self.purity_ensemble,
            "purity_master": self.purity_master,
        }


def compare_to_master(
    spec: EnsembleSpec,
    n_sweep: Sequence[int] = (),
    *,
    threads: int = 1,
    master_dt: Optional[float] = None,
) -> DualityReport:
    """Trace distance between ensemble and master ρ(t), plus the n^{-1/2} fit.

    The sweep reuses the leading ``n`` trajectories of one ensemble of
    ``max(n_traj, max(n_sweep))`` seeds.
    """
    n_max = max([spec.n_traj, *n_sweep])
    big = replace(spec, n_traj=n_max)
    result = run_ensemble(big, threads=threads)
    grid = spec.psi0.grid
    target = evolve(spec.model, pure_density(spec.psi0), spec.t, master_dt)
    states = result.states_at(spec.t)

    def distance(n: int) -> float:
        return trace_distance(_rho_from_states(grid, states[:n]), target)

    main_rho = _rho_from_states(grid, states[: spec.n_traj])
    main = trace_distance(main_rho, target)
    ns = sorted(set(int(n) for n in n_sweep))
    dists = [distance(n) for n in ns]
    slope = None
    if len(ns) >= 2:
        slope = float(np.polyfit(np.log(ns), np.log(dists), 1)[0])
    logger.info(f"duality: trace distance {main:.4f} at n={spec.n_traj}; sweep {dict(zip(ns, dists))}, slope={slope}")
    return DualityReport(main, ns, dists, slope, purity(main_rho), purity(target))


# ────────────────────────────────────────────────────────────────────────────────
# Thermal kernel
# ────────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class GaussianKernel:
    """ρ(x, y) ∝ exp(−A(x−y)² − B(x²+y²) − iC(x²−y²))."""

    A: float
    B: float
    C: float
    delta: Optional[float] = None

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {"A": self.A, "B": self.B, "C": self.C, "delta": self.delta}


def thermal_density_exponents(params: StationaryParams, model: LindbladModel) -> GaussianKernel:
    """Closed-form kernel of ∫ f_MB |ψ_qp⟩⟨ψ_qp| for a harmonic Brownian-motion model."""
    q = model.qbm
    if q is None:
        raise ModelError("the thermal kernel needs a model built from QBM parameters")
    k = float(model.potential.d2(np.array([0.0]))[0])
    if k <= 0:
        raise ModelError("the thermal kernel needs a confining quadratic potential")
    beta = params.beta
    delta = k / (2.0 * q.kT) + 2.0 * beta.real
    return GaussianKernel(
        A=abs(beta) ** 2 / delta + q.m * q.kT / (2.0 * q.hbar**2),
        B=k * beta.real / (2.0 * q.kT * delta),
        C=k * beta.imag / (2.0 * q.kT * delta),
        delta=delta,
    )


def _unwrapped_phase(elements: np.ndarray, mask: np.ndarray) -> np.ndarray:
    n = elements.shape[0]
    wrapped = np.angle(elements)
    out = wrapped.copy()
    for k in range(2 * n - 1):
        i = np.arange(max(0, k - n + 1), min(k, n - 1) + 1)
        j = k - i
        keep = mask[i, j]
        if not keep.any():
            continue
        i, j = i[keep], j[keep]
        line = np.unwrap(wrapped[i, j])
        anchor = int(np.argmin(np.abs(i - j)))
        # the true phase vanishes on the diagonal, so the anchor is unwrapped already
        line -= 2.0 * np.pi * np.round((line[anchor] - wrapped[i[anchor], j[anchor]]) / (2.0 * np.pi))
        out[i, j] = line
    return out


def fit_gaussian_kernel(rho: DensityMatrix, *, rel_cutoff: float = 1e-3) -> GaussianKernel:
    """Least-squares exponents of a centered Gaussian kernel.

    log|ρ| is fitted on the points above ``rel_cutoff`` of the peak; C comes
    from the phase on the same points, unwrapped along each anti-diagonal
    (x + y fixed, so the phase is linear in x − y).
    """
    x = np.asarray(rho.grid.x)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    mag = np.abs(rho.elements)
    mask = mag > rel_cutoff * mag.max()
    design = np.column_stack(
        [np.ones(mask.sum()), -((xx - yy) ** 2)[mask], -(xx**2 + yy**2)[mask]]
    )
    coef, *_ = np.linalg.lstsq(design, np.log(mag[mask]), rcond=None)
    diff_sq = (xx**2 - yy**2)[mask]
    phase = _unwrapped_phase(rho.elements, mask)[mask]
    denom = float(np.dot(diff_sq, diff_sq))
    c = -float(np.dot(diff_sq, phase)) / denom if denom > 0 else 0.0
    return GaussianKernel(A=float(coef[1]), B=float(coef[2]), C=c)
