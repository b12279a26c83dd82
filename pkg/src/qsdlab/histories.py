"""
Two-time decoherent histories over phase-space cells.

Quasi-projectors are Riemann sums of coherent-state projectors over a cell,
P_α = ∫_Γα dq dp |ψ_qp⟩⟨ψ_qp| / (2πħ), stored as N×N matrices acting on
amplitude vectors.  The decoherence functional for histories ᾱ = (α₁, α₂) is

    D(ᾱ, ᾱ') = Tr(P_α₂ K_t₁^t₂[P_α₁ K_t₀^t₁[ρ₀] P_α₁'] P_α₂')

with K the master-equation propagator.  Only two time slices are supported.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CellTooSmall, GridTooLarge
from .ensemble import husimi
from .fokker_planck import (
    FPCoefficients,
    PhaseSpaceField,
    PhaseSpaceLattice,
    classical_orbit,
    evolve_fp,
)
from .gaussian import StationaryParams
from .hilbert import Grid, WaveFunction
from .master import SUPEROPERATOR_MAX_N, DensityMatrix, evolve, evolve_elements
from .model import LindbladModel
from .utils.logging import get_logger
from .workers import run_tasks

logger = get_logger("histories")

__all__ = [
    "PhaseSpaceCell",
    "QuasiProjector",
    "build_projector",
    "tile_cells",
    "completeness_defect",
    "DecoherenceFunctional",
    "decoherence_functional_2",
    "epsilon_vs_area",
    "HistoryComparison",
    "history_probabilities_vs_fp",
]

MIN_CELL_AREA = 4.0  # units of 2πħ


@dataclass(frozen=True)
class PhaseSpaceCell:
    q_range: Tuple[float, float]
    p_range: Tuple[float, float]
    hbar: float = 1.0

    def __post_init__(self) -> None:
        if not (self.q_range[1] > self.q_range[0] and self.p_range[1] > self.p_range[0]):
            raise ValueError(f"cell ranges must be increasing; got {self.q_range}, {self.p_range}")

    @property
    def area(self) -> float:
        """Area in units of 2πħ."""
        dq = self.q_range[1] - self.q_range[0]
        dp = self.p_range[1] - self.p_range[0]
        return dq * dp / (2.0 * math.pi * self.hbar)

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * sum(self.q_range), 0.5 * sum(self.p_range))

    def contains(self, q: float, p: float) -> bool:
        return self.q_range[0] <= q < self.q_range[1] and self.p_range[0] <= p < self.p_range[1]

    def label(self) -> str:
        return f"[{self.q_range[0]:g},{self.q_range[1]:g})x[{self.p_range[0]:g},{self.p_range[1]:g})"


@dataclass(frozen=True)
class QuasiProjector:
    cell: PhaseSpaceCell
    matrix: np.ndarray = field(repr=False, compare=False)

    @property
    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def eigenvalue_bounds(self) -> Tuple[float, float]:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        vals = np.linalg.eigvalsh(herm)
        return float(vals[0]), float(vals[-1])

    def idempotence_defect(self) -> float:
        return float(np.linalg.norm(self.matrix @ self.matrix - self.matrix, 2))

    def weight(self, psi: WaveFunction) -> float:
        """⟨ψ|P|ψ⟩."""
        amps = psi.amplitudes
        return float((np.conj(amps) @ self.matrix @ amps).real * psi.grid.dx)


def build_projector(
    cell: PhaseSpaceCell, params: StationaryParams, grid: Grid, *, min_area: float = MIN_CELL_AREA
) -> QuasiProjector:
    """Midpoint rule at spacing no coarser than (σ_x/2, σ_p/2)."""
    if cell.area < min_area:
        raise CellTooSmall(f"cell area {cell.area:.3g} (2πħ units) is below {min_area:g}")
    hbar = params.hbar
    n_q = max(1, math.ceil((cell.q_range[1] - cell.q_range[0]) / (0.5 * params.sigma_x)))
    n_p = max(1, math.ceil((cell.p_range[1] - cell.p_range[0]) / (0.5 * params.sigma_p)))
    dq = (cell.q_range[1] - cell.q_range[0]) / n_q
    dp = (cell.p_range[1] - cell.p_range[0]) / n_p
    qs = cell.q_range[0] + (np.arange(n_q) + 0.5) * dq
    ps = cell.p_range[0] + (np.arange(n_p) + 0.5) * dp

    x = np.asarray(grid.x)
    phases = np.exp(1j * np.outer(ps, x) / hbar)  # (n_p, N)
    total = np.zeros((grid.n_points, grid.n_points), dtype=np.complex128)
    for q in qs:
        env = np.exp(-params.beta * (x - q) ** 2)
        env /= math.sqrt(float(np.sum(np.abs(env) ** 2) * grid.dx))
        rows = env[None, :] * phases
        total += rows.T @ rows.conj()
    matrix = total * (dq * dp / (2.0 * math.pi * hbar)) * grid.dx
    matrix = 0.5 * (matrix + matrix.conj().T)
    return QuasiProjector(cell, matrix)


def tile_cells(
    q_edges: Sequence[float], p_edges: Sequence[float], hbar: float = 1.0
) -> List[PhaseSpaceCell]:
    """Row-major (q outer, p inner) tiling from edge lists."""
    return [
        PhaseSpaceCell((q_edges[i], q_edges[i + 1]), (p_edges[j], p_edges[j + 1]), hbar)
        for i in range(len(q_edges) - 1)
        for j in range(len(p_edges) - 1)
    ]


def completeness_defect(projectors: Sequence[QuasiProjector], rho: Optional[DensityMatrix] = None) -> float:
    """‖Σ P_α − 1‖ (operator norm), restricted to the support of ``rho`` if given."""
    n = projectors[0].matrix.shape[0]
    total = sum(p.matrix for p in projectors) - np.eye(n)
    if rho is not None:
        herm = 0.5 * (rho.elements + rho.elements.conj().T) * rho.grid.dx
        vals, vecs = np.linalg.eigh(herm)
        support = vecs[:, vals > 1e-8 * vals.max()]
        total = support.conj().T @ total @ support
    return float(np.linalg.norm(total, 2))


# ────────────────────────────────────────────────────────────────────────────────
# Decoherence functional
# ────────────────────────────────────────────────────────────────────────────────


@dataclass
class DecoherenceFunctional:
    """D[α₁, α₂, α₁', α₂'] for histories ᾱ = (α₁, α₂)."""

    cells: List[PhaseSpaceCell]
    values: np.ndarray
    twice_projected_trace: float

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def matrix(self) -> np.ndarray:
        n = self.n_cells
        return self.values.reshape(n * n, n * n)

    def probabilities(self) -> np.ndarray:
        """p(α₁, α₂) = Re D(ᾱ, ᾱ); shape (n, n)."""
        return np.real(np.diag(self.matrix())).reshape(self.n_cells, self.n_cells)

    def epsilon(self, *, floor: float = 1e-10) -> float:
        """max |D(ᾱ,ᾱ')| / √(D(ᾱ,ᾱ) D(ᾱ',ᾱ')) over ᾱ ≠ ᾱ' with populated diagonals."""
        d = self.matrix()
        diag = np.real(np.diag(d))
        live = np.nonzero(diag > floor)[0]
        if live.size < 2:
            return 0.0
        sub = d[np.ix_(live, live)]
        norm = np.sqrt(np.outer(diag[live], diag[live]))
        ratio = np.abs(sub) / norm
        np.fill_diagonal(ratio, 0.0)
        return float(ratio.max())

    @property
    def hermiticity_defect(self) -> float:
        d = self.matrix()
        return float(np.max(np.abs(d - d.conj().T)))

    @property
    def sum_rule_defect(self) -> float:
        return float(abs(self.probabilities().sum() - 1.0))

    def modal_history(self) -> Tuple[int, int]:
        i, j = np.unravel_index(int(np.argmax(self.probabilities())), (self.n_cells, self.n_cells))
        return int(i), int(j)


def _evolve_block(payload) -> np.ndarray:
    model, grid, stack, t, dt = payload
    return evolve_elements(model, grid, stack, t, dt)


def decoherence_functional_2(
    model: LindbladModel,
    rho0: DensityMatrix,
    projectors: Sequence[QuasiProjector],
    t1: float,
    t2: float,
    dt: Optional[float] = None,
    *,
    threads: int = 1,
    block: int = 16,
) -> DecoherenceFunctional:
    """Two-slice functional with t₀ = 0; (α₁, α₁') evolutions fan out over workers."""
    grid = rho0.grid
    if grid.n_points > SUPEROPERATOR_MAX_N:
        raise GridTooLarge(f"decoherence functional needs N <= {SUPEROPERATOR_MAX_N}; got {grid.n_points}")
    if not 0 <= t1 <= t2:
        raise ValueError(f"need 0 <= t1 <= t2; got t1={t1}, t2={t2}")
    dx = grid.dx
    n = len(projectors)
    mats = np.stack([p.matrix for p in projectors])

    rho1 = evolve(model, rho0, t1, dt).elements
    pairs = list(itertools.product(range(n), repeat=2))
    # P ρ P' in kernel form
    stack = np.stack([mats[a] @ rho1 @ mats[b] for a, b in pairs])
    tasks = [(k, (model, grid, stack[k : k + block], t2 - t1, dt)) for k in range(0, len(pairs), block)]
    evolved = run_tasks(_evolve_block, tasks, threads=threads)
    stack = np.concatenate([evolved[k] for k in sorted(evolved)])

    values = np.empty((n, n, n, n), dtype=np.complex128)
    for (a1, b1), kernel in zip(pairs, stack):
        # Tr(P_α₂ X P_α₂') = Σ (P_α₂' P_α₂)_ji X_ij · dx
        values[a1, :, b1, :] = np.einsum("aij,bji->ab", np.einsum("aik,kj->aij", mats, kernel), mats) * dx
    # same diagonal sum taken as Σ_α₁ Σ_α₂ Tr(P_α₂ K[P_α₁ ρ P_α₁] P_α₂) by plain products
    twice = 0.0
    for (a1, b1), kernel in zip(pairs, stack):
        if a1 == b1:
            twice += sum(float(np.trace(m @ kernel @ m).real) for m in mats) * dx
    result = DecoherenceFunctional(list(p.cell for p in projectors), values, twice)
    logger.info(
        f"decoherence functional: {n} cells, t1={t1:g}, t2={t2:g}, epsilon={result.epsilon():.3g}, "
        f"sum p={result.probabilities().sum():.4f}"
    )
    return result


def epsilon_vs_area(
    model: LindbladModel,
    rho0: DensityMatrix,
    params: StationaryParams,
    tilings: Dict[float, Sequence[PhaseSpaceCell]],
    t1: float,
    t2: float,
    dt: Optional[float] = None,
) -> Dict[float, float]:
    """ε for each labelled tiling (label is usually the cell area)."""
    out = {}
    for label, cells in sorted(tilings.items()):
        projectors = [build_projector(c, params, rho0.grid) for c in cells]
        out[label] = decoherence_functional_2(model, rho0, projectors, t1, t2, dt).epsilon()
    return out


# ────────────────────────────────────────────────────────────────────────────────
# Fokker–Planck comparison
# ────────────────────────────────────────────────────────────────────────────────


@dataclass
class HistoryComparison:
    epsilon: float
    decoherent: bool
    single_slice_discrepancy: float
    two_slice_discrepancy: float
    classical_peak_ok: bool
    modal_history: Tuple[int, int]
    probabilities: np.ndarray
    fp_probabilities: np.ndarray

    def as_dict(self) -> Dict[str, object]:
        return {
            "epsilon": self.epsilon,
            "decoherent": self.decoherent,
            "single_slice_discrepancy": self.single_slice_discrepancy,
            "two_slice_discrepancy": self.two_slice_discrepancy,
            "classical_peak_ok": self.classical_peak_ok,
            "modal_history": list(self.modal_history),
        }


def history_probabilities_vs_fp(
    model: LindbladModel,
    rho0: DensityMatrix,
    params: StationaryParams,
    coeffs: FPCoefficients,
    projectors: Sequence[QuasiProjector],
    t1: float,
    t2: float,
    lattice: PhaseSpaceLattice,
    dt: Optional[float] = None,
    *,
    decoherent_below: float = 0.2,
    threads: int = 1,
) -> HistoryComparison:
    """Compare diag D with Husimi-weighted Fokker–Planck transition probabilities.

    The first slice weight is the Husimi mass of K[ρ₀] in each α₁; the second
    slice carries that cell-restricted Husimi weight forward with the FP
    equation and integrates the result over α₂.
    """
    functional = decoherence_functional_2(model, rho0, projectors, t1, t2, dt, threads=threads)
    cells = functional.cells
    n = len(cells)
    eps = functional.epsilon()

    rho1 = evolve(model, rho0, t1, dt)
    q_field = husimi(rho1, params, lattice)
    first_slice_d = functional.probabilities().sum(axis=1)
    first_slice_q = np.array([q_field.cell_mass(c.q_range, c.p_range) for c in cells])
    single = float(np.max(np.abs(first_slice_d - first_slice_q)))

    fp_probs = np.zeros((n, n))
    q_mesh, p_mesh = lattice.mesh()
    for i, cell in enumerate(cells):
        inside = (
            (q_mesh >= cell.q_range[0]) & (q_mesh < cell.q_range[1])
            & (p_mesh >= cell.p_range[0]) & (p_mesh < cell.p_range[1])
        )
        restricted = np.where(inside, q_field.values, 0.0)
        if restricted.sum() * lattice.cell_area < 1e-8:
            continue
        # the FP flow is linear: one run per first-slice cell replaces a propagator per point
        moved = evolve_fp(coeffs, model, PhaseSpaceField(lattice, restricted), t2 - t1)
        for j, target in enumerate(cells):
            fp_probs[i, j] = moved.cell_mass(target.q_range, target.p_range)
    two = float(np.max(np.abs(functional.probabilities() - fp_probs)))

    a1, a2 = functional.modal_history()
    q0, p0 = cells[a1].center
    q_end, p_end = classical_orbit(coeffs, model, q0, p0, [t2 - t1])[-1]
    peak_ok = cells[a2].contains(float(q_end), float(p_end))

    logger.info(
        f"histories vs FP: epsilon={eps:.3g}, single-slice {single:.3g}, two-slice {two:.3g}, "
        f"modal history {cells[a1].label()} -> {cells[a2].label()}, classical peak ok={peak_ok}"
    )
    return HistoryComparison(
        epsilon=eps,
        decoherent=eps <= decoherent_below,
        single_slice_discrepancy=single,
        two_slice_discrepancy=two,
        classical_peak_ok=peak_ok,
        modal_history=(a1, a2),
        probabilities=functional.probabilities(),
        fp_probabilities=fp_probs,
    )
