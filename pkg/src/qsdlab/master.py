"""
Lindblad master-equation integrator: the ground truth for trajectory ensembles.

Density matrices are kernels ρ(x_i, x_j) on the position grid; Tr ρ = Σ ρ_ii dx.
Superoperators are applied matrix-free: left products act along the row axis,
right products through ρA = (A† ρ†)†.  Every kernel routine accepts stacks
of shape (..., N, N) so ``histories`` can evolve many operators in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .diagnostics import IntegrationMonitor
from .errors import GridTooLarge, StabilityViolation
from .hilbert import Grid, Observable, WaveFunction, _apply_tag
from .model import DiscreteModel, LindbladModel, Potential
from .utils.logging import StepProgress, get_logger

logger = get_logger("master")

__all__ = [
    "DensityMatrix",
    "pure_density",
    "mixture",
    "lindblad_rhs",
    "generic_lindblad_rhs",
    "stability_bound",
    "evolve",
    "propagate",
    "evolve_elements",
    "purity",
    "trace_distance",
    "expectation",
    "superoperator",
]

INVARIANT_ABORT = 1e-6
SUPEROPERATOR_MAX_N = 64


@dataclass(frozen=True)
class DensityMatrix:
    grid: Grid
    elements: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        rho = np.array(self.elements, dtype=np.complex128, copy=True)
        n = self.grid.n_points
        if rho.shape != (n, n):
            raise ValueError(f"density matrix of shape {rho.shape} does not fit {n} grid points")
        rho.setflags(write=False)
        object.__setattr__(self, "elements", rho)

    def trace(self) -> complex:
        return complex(np.trace(self.elements) * self.grid.dx)

    def hermiticity_defect(self) -> float:
        rho = self.elements
        return float(np.max(np.abs(rho - rho.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        """Spectrum of the operator (kernel times dx), ascending."""
        herm = 0.5 * (self.elements + self.elements.conj().T)
        return linalg.eigvalsh(herm * self.grid.dx)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def normalized(self) -> "DensityMatrix":
        tr = self.trace().real
        if tr <= 0:
            raise ValueError(f"cannot normalize density matrix with trace {tr}")
        return DensityMatrix(self.grid, self.elements / tr)

    def __add__(self, other: "DensityMatrix") -> "DensityMatrix":
        self.grid.check_same(other.grid)
        return DensityMatrix(self.grid, self.elements + other.elements)

    def __mul__(self, scalar: complex) -> "DensityMatrix":
        return DensityMatrix(self.grid, self.elements * scalar)

    __rmul__ = __mul__


def pure_density(psi: WaveFunction) -> DensityMatrix:
    """|ψ⟩⟨ψ| as a kernel ψ(x_i)ψ*(x_j)."""
    amps = psi.amplitudes
    return DensityMatrix(psi.grid, np.outer(amps, amps.conj()))


def mixture(components: Sequence[Union[WaveFunction, DensityMatrix]], weights: Sequence[float]) -> DensityMatrix:
    """Σ w_k ρ_k renormalized to unit trace."""
    if len(components) != len(weights) or not components:
        raise ValueError("mixture needs one weight per component")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError(f"mixture weights must be nonnegative and not all zero; got {weights}")
    rhos = [pure_density(c) if isinstance(c, WaveFunction) else c for c in components]
    grid = rhos[0].grid
    total = np.zeros((grid.n_points, grid.n_points), dtype=np.complex128)
    for weight, rho in zip(w, rhos):
        grid.check_same(rho.grid)
        total += weight * rho.elements
    return DensityMatrix(grid, total).normalized()


# ────────────────────────────────────────────────────────────────────────────────
# Right-hand sides
# ────────────────────────────────────────────────────────────────────────────────


def _dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _left(apply: Callable[..., np.ndarray], m: np.ndarray) -> np.ndarray:
    return apply(m, axis=-2)


def _right(apply_adjoint: Callable[..., np.ndarray], m: np.ndarray) -> np.ndarray:
    """m·B given a kernel that applies B†."""
    return _dag(apply_adjoint(_dag(m), axis=-2))


def _explicit_rhs(dm: DiscreteModel, rho: np.ndarray, caldeira_leggett: bool) -> np.ndarray:
    model = dm.model
    hbar, a, b = model.hbar, model.a, model.b
    shift = model.c - 0.5 * hbar * a * b

    def h_eff(m, axis=-2):
        out = dm.apply_h0(m, axis)
        if shift != 0.0:
            out = out + shift * dm.apply_anticommutator(m, axis)
        return out

    out = (-1j / hbar) * (_left(h_eff, rho) - _right(h_eff, rho))

    sep = dm.x[:, None] - dm.x[None, :]
    if a != 0.0:
        out = out - 0.5 * a**2 * sep**2 * rho
    if a != 0.0 and b != 0.0:
        s = _right(dm.apply_p, rho) + _left(dm.apply_p, rho)
        out = out - 1j * a * b * sep * s
    if b != 0.0 and not caldeira_leggett:
        p_rho = _left(dm.apply_p, rho)
        p2_rho = _left(lambda m, axis: dm.apply_p(m, axis, power=2), rho)
        rho_p2 = _right(lambda m, axis: dm.apply_p(m, axis, power=2), rho)
        out = out - 0.5 * b**2 * (p2_rho + rho_p2 - 2.0 * _right(dm.apply_p, p_rho))
    return out


def _generic_rhs(dm: DiscreteModel, rho: np.ndarray) -> np.ndarray:
    hbar = dm.model.hbar
    out = (-1j / hbar) * (_left(dm.apply_h, rho) - _right(dm.apply_h, rho))

    def ldl(m, axis=-2):
        return dm.apply_l_dagger(dm.apply_l(m, axis), axis)

    jump = _left(dm.apply_l, _right(dm.apply_l, rho))
    return out + jump - 0.5 * (_left(ldl, rho) + _right(ldl, rho))


def _rhs_elements(dm: DiscreteModel, rho: np.ndarray, form: str, caldeira_leggett: bool) -> np.ndarray:
    if form == "explicit":
        return _explicit_rhs(dm, rho, caldeira_leggett)
    if form == "generic":
        if caldeira_leggett:
            raise ValueError("caldeira_leggett applies to the explicit form only")
        return _generic_rhs(dm, rho)
    raise ValueError(f"unknown master-equation form {form!r}; use 'explicit' or 'generic'")


def lindblad_rhs(
    model: LindbladModel, rho: DensityMatrix, *, caldeira_leggett: bool = False
) -> DensityMatrix:
    """dρ/dt in the explicit x–p form.

    −(i/ħ)[H₀ + (c − ½ħab){x̂,p̂}, ρ] − iab[x̂,{ρ,p̂}] − ½a²[x̂,[x̂,ρ]] − ½b²[p̂,[p̂,ρ]].
    ``caldeira_leggett=True`` drops the last term.
    """
    dm = model.discretize(rho.grid)
    return DensityMatrix(rho.grid, _explicit_rhs(dm, rho.elements, caldeira_leggett))


def generic_lindblad_rhs(model: LindbladModel, rho: DensityMatrix) -> DensityMatrix:
    """−(i/ħ)[H,ρ] + LρL† − ½{L†L, ρ}."""
    dm = model.discretize(rho.grid)
    return DensityMatrix(rho.grid, _generic_rhs(dm, rho.elements))


# ────────────────────────────────────────────────────────────────────────────────
# Integration
# ────────────────────────────────────────────────────────────────────────────────


def stability_bound(model: LindbladModel, grid: Grid) -> float:
    """Largest RK4 step accepted for this model on this grid."""
    hbar = model.hbar
    potential = np.asarray(model.potential.value(np.asarray(grid.x)))
    x_abs = float(np.max(np.abs(grid.x)))
    shift = abs(model.c - 0.5 * model.hab)
    e_max = grid.kinetic_scale(model.m) + float(np.ptp(potential))
    e_max += 2.0 * shift * x_abs * grid.p_max
    gamma_max = (
        0.5 * model.a**2 * grid.length**2
        + 2.0 * model.b**2 * grid.p_max**2
        + 2.0 * abs(model.a * model.b) * grid.length * grid.p_max
    )
    bounds = [0.2 * hbar / e_max]
    if gamma_max > 0:
        bounds.append(2.5 / gamma_max)
    return min(bounds)


def _rk4_step(rhs: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_plan(duration: float, dt: float) -> tuple[int, float]:
    if duration <= 0:
        return 0, dt
    n = max(1, int(math.ceil(duration / dt - 1e-9)))
    return n, duration / n


def propagate(
    model: LindbladModel,
    rho0: DensityMatrix,
    times: Sequence[float],
    dt: Optional[float] = None,
    *,
    form: str = "explicit",
    caldeira_leggett: bool = False,
    positivity_every: int = 50,
    monitor: Optional[IntegrationMonitor] = None,
) -> List[DensityMatrix]:
    """ρ(t) at each of ``times`` (ascending, ≥ 0) by classical RK4.

    Trace and hermiticity are checked after every step; drift beyond 1e−6
    aborts with StabilityViolation.  The smallest eigenvalue is sampled every
    ``positivity_every`` steps and recorded on the monitor, never projected.
    """
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError(f"times must be ascending and nonnegative; got {times}")
    grid = rho0.grid
    bound = stability_bound(model, grid)
    monitor = monitor or IntegrationMonitor("master")
    if dt is None:
        dt = bound
    elif dt > bound * (1 + 1e-12):
        payload = monitor.report_error(
            "StabilityViolation", f"dt={dt:.3e} exceeds the RK4 stability bound {bound:.3e}"
        )
        raise StabilityViolation(
            f"dt={dt:.3e} exceeds the RK4 stability bound {bound:.3e} for this grid; "
            "reduce dt or coarsen the grid",
            diagnostics=payload,
        )

    dm = model.discretize(grid)
    rhs = lambda m: _rhs_elements(dm, m, form, caldeira_leggett)  # noqa: E731
    trace0 = rho0.trace().real
    rho = np.array(rho0.elements)
    t_now = 0.0
    out: List[DensityMatrix] = []
    monitor.start()
    total_steps = sum(_step_plan(t2 - t1, dt)[0] for t1, t2 in zip([0.0] + times, times))
    progress = StepProgress(logger, "master RK4", total_steps)
    step = 0

    for target in times:
        n_steps, h = _step_plan(target - t_now, dt)
        for _ in range(n_steps):
            rho = _rk4_step(rhs, rho, h)
            t_now += h
            step += 1
            monitor.observe_step(t_now)
            drift = abs(np.trace(rho).real * grid.dx - trace0)
            defect = float(np.max(np.abs(rho - rho.conj().T)))
            monitor.observe_norm(drift)
            monitor.observe_hermiticity(defect)
            if not np.isfinite(drift) or drift > INVARIANT_ABORT or defect > INVARIANT_ABORT:
                message = (
                    f"invariant drift at t={t_now:.6g}: trace drift {drift:.3e}, "
                    f"hermiticity defect {defect:.3e} (limit {INVARIANT_ABORT:g})"
                )
                payload = monitor.report_error("StabilityViolation", message)
                raise StabilityViolation(message, diagnostics=payload)
            if positivity_every and step % positivity_every == 0:
                monitor.observe_minimum(DensityMatrix(grid, rho).min_eigenvalue())
            progress.update(step, t=t_now, trace_drift=drift)
        t_now = target
        out.append(DensityMatrix(grid, rho))

    if positivity_every and step:
        monitor.observe_minimum(out[-1].min_eigenvalue())
    progress.done()
    logger.debug(f"master propagate finished: {monitor.snapshot()}")
    return out


def evolve(
    model: LindbladModel,
    rho0: DensityMatrix,
    t: float,
    dt: Optional[float] = None,
    **kwargs,
) -> DensityMatrix:
    """ρ(t); ``t = 0`` returns ``rho0`` itself."""
    if t == 0:
        return rho0
    return propagate(model, rho0, [t], dt, **kwargs)[0]


def evolve_elements(
    model: LindbladModel,
    grid: Grid,
    stack: np.ndarray,
    t: float,
    dt: Optional[float] = None,
    *,
    form: str = "explicit",
) -> np.ndarray:
    """Evolve a stack of (not necessarily Hermitian) kernels with RK4."""
    stack = np.asarray(stack, dtype=np.complex128)
    if t <= 0:
        return stack.copy()
    bound = stability_bound(model, grid)
    n_steps, h = _step_plan(t, min(dt or bound, bound))
    dm = model.discretize(grid)
    progress = StepProgress(logger, f"kernel stack x{stack.shape[0] if stack.ndim == 3 else 1}", n_steps)
    y = stack
    for step in range(1, n_steps + 1):
        y = _rk4_step(lambda m: _rhs_elements(dm, m, form, False), y, h)
        progress.update(step)
    if not np.all(np.isfinite(y)):
        raise StabilityViolation(f"kernel stack diverged within t={t:.6g} (h={h:.3e})")
    return y


# ────────────────────────────────────────────────────────────────────────────────
# Diagnostics
# ────────────────────────────────────────────────────────────────────────────────


def purity(rho: DensityMatrix) -> float:
    """Tr(ρ²) = Σ|ρ_ij|² dx² for Hermitian ρ."""
    return float(np.sum(np.abs(rho.elements) ** 2) * rho.grid.dx**2)


def trace_distance(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """½ Σ|λ| over the spectrum of the Hermitian difference."""
    rho1.grid.check_same(rho2.grid)
    diff = rho1.elements - rho2.elements
    diff = 0.5 * (diff + diff.conj().T) * rho1.grid.dx
    return float(0.5 * np.sum(np.abs(linalg.eigvalsh(diff))))


def expectation(
    rho: DensityMatrix, op: Union[str, Observable], potential: Optional[Potential] = None
) -> complex:
    """Tr(Ô ρ) for a catalog tag."""
    tag = Observable.parse(op)
    applied = _apply_tag(rho.grid, rho.elements.T, tag, potential)
    return complex(np.trace(applied) * rho.grid.dx)


def superoperator(
    model: LindbladModel, grid: Grid, *, form: str = "explicit", caldeira_leggett: bool = False
) -> np.ndarray:
    """Dense N²×N² generator acting on row-major flattened kernels."""
    n = grid.n_points
    if n > SUPEROPERATOR_MAX_N:
        raise GridTooLarge(
            f"dense superoperator needs N <= {SUPEROPERATOR_MAX_N}; got N={n}"
        )
    dm = model.discretize(grid)
    generator = np.empty((n * n, n * n), dtype=np.complex128)
    eye = np.eye(n * n, dtype=np.complex128)
    for start in range(0, n * n, n):
        basis = eye[start : start + n].reshape(n, n, n)
        images = _rhs_elements(dm, basis, form, caldeira_leggett)
        generator[:, start : start + n] = images.reshape(n, n * n).T
    return generator
