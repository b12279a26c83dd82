"""
Named numerical experiments.

Each experiment builds its model from an :class:`~qsdlab.config.ExperimentConfig`,
runs the solvers it needs and returns an :class:`ExperimentResult`: a table of
series rows, named checks (measured value, expected value, tolerance, pass/fail),
phase-space fields and free-form metadata.  ``EXPERIMENTS`` is the registry the
config parser and the CLI read from.

Checks marked ``required=False`` are reported but do not decide the exit code;
they cover order-of-magnitude statements and everything that runs outside the
quadratic-potential scope.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig
from .ensemble import (
    EnsembleSpec,
    coherent_diagonality,
    compare_to_master,
    density_from_field,
    estimate_f,
    fit_gaussian_kernel,
    husimi,
    reconstruct_rho,
    run_ensemble,
    thermal_density_exponents,
)
from .errors import ConfigError, ModelError, ScopeWarning
from .fokker_planck import (
    PhaseSpaceLattice,
    PhaseSpaceField,
    classical_orbit,
    coefficients,
    evolve_fp,
    fp_propagator,
    gaussian_field,
    propagate_fp,
    stationary_covariance,
    stationary_field,
)
from .gaussian import (
    StationaryParams,
    coherent_state,
    gaussian_packet,
    solve_beta,
    stationary_residuals,
    superposition,
)
from .hilbert import measure_moments
from .histories import (
    build_projector,
    completeness_defect,
    epsilon_vs_area,
    history_probabilities_vs_fp,
    tile_cells,
)
from .localization import (
    delta_A2,
    dA2_drift,
    dA2_drift_expanded,
    estimate_rates,
    linear_coefficients,
    sample_admissible_deviations,
    verify_localization,
)
from .master import evolve, pure_density
from .model import (
    Harmonic,
    InvertedHarmonic,
    LindbladModel,
    QBMParams,
    from_qbm,
    standard,
    validity_ratio,
)
from .qsd import moment_drift_check
from .utils.logging import get_logger

logger = get_logger("experiments")

__all__ = [
    "Check",
    "ExperimentResult",
    "Experiment",
    "EXPERIMENTS",
    "close_check",
    "bound_check",
    "flag_check",
    "run_experiment",
]


# ────────────────────────────────────────────────────────────────────────────────
# Results
# ────────────────────────────────────────────────────────────────────────────────


@dataclass
class Check:
    """One named assertion with the relation it tests."""

    name: str
    equation: str
    measured: Any
    expected: Any
    tolerance: Any
    passed: bool
    detail: str = ""
    required: bool = True

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "equation": self.equation,
            "measured": self.measured,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "required": self.required,
            "detail": self.detail,
        }


def _finite(value: Any) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value)


def close_check(
    name: str,
    equation: str,
    measured: float,
    expected: float,
    tolerance: float,
    *,
    relative: bool = False,
    detail: str = "",
    required: bool = True,
) -> Check:
    """|measured − expected| ≤ tolerance (times |expected| when ``relative``)."""
    measured, expected = float(measured), float(expected)
    limit = tolerance * (abs(expected) if relative else 1.0)
    passed = _finite(measured) and abs(measured - expected) <= limit
    tol = {"relative": tolerance} if relative else tolerance
    return Check(name, equation, measured, expected, tol, passed, detail, required)


def bound_check(
    name: str,
    equation: str,
    measured: Optional[float],
    *,
    lower: Optional[float] = None,
    upper: Optional[float] = None,
    detail: str = "",
    required: bool = True,
) -> Check:
    """lower ≤ measured ≤ upper; a missing measurement fails."""
    if measured is None or not _finite(float(measured)):
        return Check(name, equation, measured, [lower, upper], None, False, detail or "not measured", required)
    measured = float(measured)
    passed = (lower is None or measured >= lower) and (upper is None or measured <= upper)
    return Check(name, equation, measured, [lower, upper], None, passed, detail, required)


def flag_check(name: str, equation: str, ok: bool, *, detail: str = "", required: bool = True) -> Check:
    return Check(name, equation, bool(ok), True, None, bool(ok), detail, required)


@dataclass
class ExperimentResult:
    experiment: str
    columns: Tuple[str, ...] = ()
    rows: List[Sequence[float]] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)
    fields: Dict[str, PhaseSpaceField] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    @property
    def failed_checks(self) -> List[Check]:
        return [c for c in self.checks if c.required and not c.passed]

    def add(self, check: Check) -> Check:
        level = "info" if check.passed or not check.required else "warning"
        getattr(logger, level)(
            f"[{self.experiment}] {check.name}: measured={_short(check.measured)} "
            f"expected={_short(check.expected)} -> {'ok' if check.passed else 'FAIL'}"
        )
        self.checks.append(check)
        return check


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_short(v) for v in value) + "]"
    return str(value)


# ────────────────────────────────────────────────────────────────────────────────
# Registry
# ────────────────────────────────────────────────────────────────────────────────


def _coerce_option(value: Any, default: Any, where: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {type(value).__name__}", field_path=where)
        return value
    if isinstance(value, bool):
        raise ConfigError("expected a number, got a boolean", field_path=where)
    if isinstance(default, tuple):
        ints = all(isinstance(v, int) for v in default)
        if not isinstance(value, list) or not all(
            isinstance(v, int if ints else (int, float)) and not isinstance(v, bool) for v in value
        ):
            kind = "integers" if ints else "numbers"
            raise ConfigError(f"expected a list of {kind}", field_path=where)
        return tuple(int(v) if ints else float(v) for v in value)
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {type(value).__name__}", field_path=where)
        return value
    if not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {type(value).__name__}", field_path=where)
    return float(value)


@dataclass(frozen=True)
class Experiment:
    """A named runner plus the option names (and defaults) it accepts."""

    name: str
    description: str
    topic: str
    runner: Callable[[ExperimentConfig], ExperimentResult]
    options: Mapping[str, Any] = field(default_factory=dict)

    def resolve_options(self, table: Mapping[str, Any]) -> Dict[str, Any]:
        out = dict(self.options)
        for key, value in table.items():
            where = f"experiment_options.{key}"
            if key not in self.options:
                allowed = ", ".join(sorted(self.options)) or "none"
                raise ConfigError(f"unknown option for {self.name!r} (allowed: {allowed})", field_path=where)
            out[key] = _coerce_option(value, self.options[key], where)
        return out

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        logger.info(f"Running experiment {self.name!r} ({self.topic})")
        start = time.monotonic()
        result = self.runner(config)
        logger.info(
            f"Experiment {self.name!r} finished in {time.monotonic() - start:.1f}s: "
            f"{sum(c.passed for c in result.checks)}/{len(result.checks)} checks passed"
        )
        return result


# ────────────────────────────────────────────────────────────────────────────────
# Shared helpers
# ────────────────────────────────────────────────────────────────────────────────


def _params_dict(params: StationaryParams) -> Dict[str, Any]:
    return {
        "beta": params.beta,
        "sigma_x2": params.sigma_x2,
        "sigma_p2": params.sigma_p2,
        "r0": params.r0,
        "valid_at": params.valid_at,
        "ambiguous": params.ambiguous,
    }


def _omega(model: LindbladModel) -> Optional[float]:
    v2 = float(model.potential.d2(np.array([0.0]))[0])
    return math.sqrt(v2 / model.m) if v2 > 0 else None


def _duration(config: ExperimentConfig, taus: Optional[float], tau: float) -> float:
    """``taus`` localization times when given, else the configured t."""
    if taus is None:
        return config.integration.t
    if not math.isfinite(tau):
        raise ConfigError("duration in units of tau needs a localizing model", field_path="experiment_options")
    return float(taus) * tau


def _ensemble_spec(config: ExperimentConfig, model, psi0, t: float, params, **kwargs) -> EnsembleSpec:
    integ = config.integration
    return EnsembleSpec(
        model=model,
        psi0=psi0,
        t=t,
        dt=integ.dt,
        n_traj=kwargs.pop("n_traj", integ.n_traj),
        base_seed=integ.base_seed,
        record_every=integ.record_every,
        params=params,
        **kwargs,
    )


def _coefficient_checks(result: ExperimentResult, params: StationaryParams, model: LindbladModel, prefix: str = "") -> None:
    k = linear_coefficients(params, model)
    scale = max(1.0, abs(k.c1))
    eq_c2 = "c₂ = c₁ = −ħ²a²/2 − 2a²R₀² − 2b²σ_p⁴"
    result.add(close_check(f"{prefix}c2_equals_c1", eq_c2, k.c2 - k.c1, 0.0, 1e-10 * scale))
    result.add(
        close_check(
            f"{prefix}c1_raw_matches",
            "−ħ²a² + 2ħabσ_p² + 2R₀V'' = c₁ at the stationary widths",
            k.c1_raw - k.c1,
            0.0,
            1e-10 * scale,
        )
    )
    result.add(close_check(f"{prefix}c2_raw_matches", "c₂ as written = c₂ simplified", k.c2_raw - k.c2, 0.0, 1e-10 * scale))
    result.add(
        close_check(
            f"{prefix}c3_identity",
            "c₃ = −2R₀²c₁/(σ_x²σ_p²)",
            k.c3_raw + 2.0 * params.r0**2 * k.c1 / (params.sigma_x2 * params.sigma_p2),
            0.0,
            1e-10 * scale,
        )
    )
    result.add(bound_check(f"{prefix}c1_negative", "c₁ < 0", k.c1, upper=-1e-300))


# ────────────────────────────────────────────────────────────────────────────────
# stationary
# ────────────────────────────────────────────────────────────────────────────────


def _free_widths(model: LindbladModel) -> Dict[str, float]:
    """Closed-form stationary widths of the free particle with b = 0."""
    a, m, hbar = abs(model.a), model.m, model.hbar
    return {
        "sigma_x2": math.sqrt(hbar / m) / (math.sqrt(2.0) * a),
        "sigma_p2": hbar**1.5 * a * math.sqrt(m) / math.sqrt(2.0),
        "r0": 0.5 * hbar,
    }


def _run_stationary(config: ExperimentConfig) -> ExperimentResult:
    opts = config.options
    model, grid = config.build_model(), config.build_grid()
    params = solve_beta(model)
    rates = estimate_rates(params, model)
    result = ExperimentResult(
        "stationary",
        columns=("t", "x_mean", "p_mean", "var_x", "var_p", "r", "delta_A2"),
        metadata={"model": model.describe(), "params": _params_dict(params), "rates": rates.as_dict()},
    )

    scale = max(1.0, params.sigma_x2 * params.sigma_p2)
    residual = max(abs(v) for v in stationary_residuals(model, params))
    result.add(
        bound_check(
            "stationary_residuals", "d(Δx)²/dt = d(Δp)²/dt = dR/dt = 0 at (σ_x², σ_p², R₀)", residual, upper=1e-10 * scale
        )
    )
    result.add(
        close_check(
            "minimum_uncertainty",
            "σ_x²σ_p² − R₀² = ħ²/4",
            params.moments().uncertainty_excess(model.hbar),
            0.0,
            1e-10 * scale,
        )
    )
    _coefficient_checks(result, params, model)
    if model.potential.tag == "free" and model.b == 0.0:
        golden = _free_widths(model)
        formulas = {
            "sigma_x2": "σ_x² = (ħ/m)^½ / (√2 a)",
            "sigma_p2": "σ_p² = ħ^{3/2} a m^½ / √2",
            "r0": "R₀ = ħ/2",
        }
        for name, value in golden.items():
            result.add(close_check(name, formulas[name], getattr(params, name), value, 1e-10, relative=True))
        result.add(
            close_check(
                "sigma_product", "σ_xσ_p = ħ/√2", params.sigma_x * params.sigma_p, model.hbar / math.sqrt(2.0), 1e-10,
                relative=True,
            )
        )

    t = _duration(config, opts["duration_taus"], rates.tau)
    psi0 = coherent_state(grid, params, opts["q0"], opts["p0"])
    ensemble = run_ensemble(_ensemble_spec(config, model, psi0, t, params), threads=config.threads)
    mean = ensemble.moment_stack().mean(axis=0)
    dA2 = np.stack([rec.delta_A2 for rec in ensemble.records]).mean(axis=0)
    width_scale = math.sqrt(params.sigma_x2 * params.sigma_p2)
    for k, name, target in ((2, "var_x", params.sigma_x2), (3, "var_p", params.sigma_p2), (4, "r", params.r0)):
        ref = abs(target) if abs(target) > 1e-12 * width_scale else width_scale
        deviation = float(np.max(np.abs(mean[:, k] - target))) / ref
        result.add(
            bound_check(
                f"ensemble_{name}",
                f"M[{name}](t) stays at its stationary value",
                deviation,
                upper=opts["ensemble_tolerance"],
                detail=f"max relative deviation over {ensemble.spec.n_traj} trajectories and t <= {t:.4g}",
            )
        )
    for i, t_k in enumerate(ensemble.times):
        result.rows.append((float(t_k), *(float(v) for v in mean[i]), float(dA2[i])))

    if opts["drift_samples"] > 0:
        beta = params.beta
        states = {
            "coherent": coherent_state(grid, params, 1.0, 0.5),
            "squeezed": gaussian_packet(grid, complex(2.0 * beta.real, 0.5 * beta.real), -1.0, 0.0, model.hbar),
            "cat": superposition(grid, params, [(-2.0, 0.0), (2.0, 0.0)]),
        }
        drift_meta = {}
        for k, (label, psi) in enumerate(states.items()):
            report = moment_drift_check(
                model, psi, opts["drift_samples"], opts["drift_dt"], seed=config.integration.base_seed + k
            )
            drift_meta[label] = report.as_dict()
            result.add(
                bound_check(
                    f"moment_drift_{label}",
                    "E[dm]/dt = analytic drift of (⟨x⟩, ⟨p⟩, (Δx)², (Δp)², R)",
                    report.max_abs_z,
                    upper=3.0,
                    detail=f"max |z| over 5 moments, {report.n_samples} single-step samples",
                )
            )
        result.metadata["moment_drift"] = drift_meta
    return result


# ────────────────────────────────────────────────────────────────────────────────
# localization
# ────────────────────────────────────────────────────────────────────────────────


def _model_matrix(model: LindbladModel) -> List[Tuple[str, LindbladModel]]:
    matrix = [
        ("free", standard(1.0, 0.0)),
        ("harmonic_w0.5", standard(1.0, 0.0, potential=Harmonic(0.5, 1.0))),
        ("harmonic_w1_b0.3", standard(1.0, 0.3, potential=Harmonic(1.0, 1.0))),
        ("harmonic_w2_a0.5_b0.1", standard(0.5, 0.1, potential=Harmonic(2.0, 1.0))),
        ("inverted_w0.5_b0.2", standard(1.0, 0.2, potential=InvertedHarmonic(0.5, 1.0))),
        ("qbm_g0.1_kT10", from_qbm(QBMParams(0.1, 10.0), Harmonic(1.0, 1.0))),
    ]
    if model.potential.is_quadratic:
        matrix.insert(0, ("configured", model))
    return matrix


def _drift_theorem(result: ExperimentResult, model: LindbladModel, n_samples: int, seed: int) -> None:
    rows = {}
    worst_sign = worst_identity = 0.0
    for label, candidate in _model_matrix(model):
        params = solve_beta(candidate)
        dev = sample_admissible_deviations(params, n_samples, seed=seed)
        regrouped = np.asarray(dA2_drift(params, dev, candidate))
        expanded = np.asarray(dA2_drift_expanded(params, dev, candidate))
        scale = max(1.0, params.sigma_p2**2)
        sign = float(regrouped.max()) / scale
        identity = float(np.max(np.abs(regrouped - expanded))) / max(1.0, float(np.max(np.abs(expanded))))
        away = np.sqrt(dev.x_dev**2 + dev.y_dev**2 + dev.z_dev**2) > 1e-3
        strict = bool(np.all(regrouped[away] < 0.0))
        worst_sign = max(worst_sign, sign)
        worst_identity = max(worst_identity, identity)
        rows[label] = {"max_drift": sign, "identity_defect": identity, "strictly_negative_away": strict}
        _coefficient_checks(result, params, candidate, prefix=f"{label}.")
        result.add(
            flag_check(
                f"{label}.zero_only_at_origin",
                "M d(ΔA)²/dt < 0 for (X, Y, Z) ≠ 0",
                strict,
                detail=f"{int(away.sum())} samples away from the origin",
            )
        )
    result.add(
        bound_check(
            "drift_nonpositive",
            "M d(ΔA)²/dt = (c₁/σ_p²)(ΔA)² − sum of squares ≤ 0",
            worst_sign,
            upper=1e-12,
            detail=f"{n_samples} admissible deviations per model, scaled by σ_p⁴",
        )
    )
    result.add(
        bound_check(
            "drift_identity",
            "linear + quadratic expansion in (X, Y, Z) = regrouped form",
            worst_identity,
            upper=1e-9,
        )
    )
    result.metadata["model_matrix"] = rows


def _run_localization(config: ExperimentConfig) -> ExperimentResult:
    opts = config.options
    model, grid = config.build_model(), config.build_grid()
    params = solve_beta(model)
    ell = opts["ell"]
    rates = estimate_rates(params, model, ell)
    in_scope = model.potential.is_quadratic
    result = ExperimentResult(
        "localization",
        columns=("t", "cat_mean_dA2", "cat_stderr_dA2", "cat_mean_var_x", "coherent_mean_dA2"),
        metadata={
            "model": model.describe(),
            "params": _params_dict(params),
            "rates": rates.as_dict(),
            "report_only": not in_scope,
        },
    )
    _drift_theorem(result, model, opts["n_samples"], opts["sample_seed"])

    cat = superposition(grid, params, [(-0.5 * ell, 0.0), (0.5 * ell, 0.0)])
    dA2_0 = delta_A2(cat, params)
    var_x0 = measure_moments(cat).var_x
    estimate = 4.0 * model.hbar**2 * abs(params.beta) ** 2 * var_x0
    result.add(
        bound_check(
            "cat_initial_dA2",
            "(ΔA)² ≈ 4ħ²|β|²(Δx)² for two separated packets",
            dA2_0 / estimate,
            lower=0.5,
            upper=2.0,
            detail=f"(ΔA)²={dA2_0:.6g}, estimate={estimate:.6g}",
        )
    )
    scaling = model.hbar**2 * ell**2 / params.sigma_x2**2
    result.add(
        bound_check(
            "cat_initial_scaling",
            "(ΔA)² ~ ħ²ℓ²/σ_x⁴",
            dA2_0 / scaling,
            lower=0.1,
            upper=10.0,
            required=False,
        )
    )

    family = [cat, coherent_state(grid, params, 0.0, 0.0)]
    labels = ["cat", "coherent"]
    if opts["include_broad"]:
        family.append(gaussian_packet(grid, complex(params.beta.real / 25.0, 0.0), 0.0, 0.0, model.hbar))
        labels.append("broad")
    t = _duration(config, opts["duration_taus"], rates.tau)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if not in_scope else "default", ScopeWarning)
        report = verify_localization(
            model,
            family,
            config.integration.n_traj,
            t,
            config.integration.dt,
            config.integration.base_seed,
            labels=labels,
            record_every=config.integration.record_every,
            threads=config.threads,
            params=params,
        )
    if not in_scope:
        logger.warning(f"potential {model.potential.tag!r} is outside the quadratic scope; dynamics are report-only")
    for curve in report.curves:
        result.add(
            flag_check(
                f"{curve.label}_monotone",
                "M(ΔA)² is non-increasing (isotonic fit R² ≥ 0.95 or below the noise floor)",
                curve.monotone,
                detail=f"isotonic R²={curve.isotonic_r2:.4f}",
                required=in_scope,
            )
        )
        result.add(
            bound_check(
                f"{curve.label}_envelope",
                "M(ΔA)²(t) ≤ M(ΔA)²(0)·exp(c₁t/σ_p²)·(1 + 5/√n) + 0.05σ_p²",
                curve.max_envelope_excess,
                upper=0.0,
                required=in_scope,
            )
        )
    cat_curve = report.curves[0]
    tau_sup = rates.tau_superposition
    if tau_sup is not None:
        ratio = None if cat_curve.efold_time is None else cat_curve.efold_time / tau_sup
        result.add(
            bound_check(
                "cat_efold_time",
                "e-folding time of M(ΔA)² ~ 1/(ℓ²a²)",
                ratio,
                lower=0.1,
                upper=10.0,
                detail=f"e-fold={cat_curve.efold_time}, 1/(ℓ²a²)={tau_sup:.4g}",
                required=in_scope,
            )
        )
    if opts["include_broad"]:
        broad = report.curves[-1]
        result.add(
            close_check(
                "broad_final_var_x",
                "M(Δx)² → σ_x²",
                float(broad.mean_var_x[-1]),
                params.sigma_x2,
                0.1,
                relative=True,
                required=in_scope,
            )
        )
    coherent = report.curves[1]
    for i, t_k in enumerate(cat_curve.times):
        result.rows.append(
            (
                float(t_k),
                float(cat_curve.mean_dA2[i]),
                float(cat_curve.stderr_dA2[i]),
                float(cat_curve.mean_var_x[i]),
                float(coherent.mean_dA2[i]),
            )
        )
    result.metadata["curves"] = {
        c.label: {"isotonic_r2": c.isotonic_r2, "efold_time": c.efold_time, "envelope_excess": c.max_envelope_excess}
        for c in report.curves
    }

    if opts["diagonality"] and tau_sup is not None:
        t_d = 10.0 * tau_sup
        rho = evolve(model, pure_density(cat), t_d)
        pairs = [((-0.5 * ell, 0.0), (0.5 * ell, 0.0))]
        diag = coherent_diagonality(rho, params, pairs)
        pair = diag.pairs[0]
        result.add(
            bound_check(
                "branch_coherence",
                "|⟨ψ_qp|ρ|ψ_q'p'⟩| / (⟨ψ_qp|ρ|ψ_qp⟩⟨ψ_q'p'|ρ|ψ_q'p'⟩)^½ at t = 10/(ℓ²a²)",
                pair.ratio,
                upper=0.1,
                detail=pair.note or f"separation {ell / params.sigma_x:.1f} σ_x",
                required=in_scope and pair.separated,
            )
        )
    return result


# ────────────────────────────────────────────────────────────────────────────────
# duality
# ────────────────────────────────────────────────────────────────────────────────


def _run_duality(config: ExperimentConfig) -> ExperimentResult:
    opts = config.options
    model, grid = config.build_model(), config.build_grid()
    params = solve_beta(model)
    rates = estimate_rates(params, model)
    t = _duration(config, opts["duration_taus"], rates.tau)
    psi0 = coherent_state(grid, params, opts["q0"], opts["p0"])
    spec = _ensemble_spec(config, model, psi0, t, params)
    report = compare_to_master(spec, opts["n_sweep"], threads=config.threads, master_dt=opts["master_dt"])

    result = ExperimentResult(
        "duality",
        columns=("n_traj", "trace_distance"),
        metadata={"model": model.describe(), "params": _params_dict(params), "t": t, "report": report.as_dict()},
    )
    result.rows.extend((float(n), float(d)) for n, d in zip(report.n_values, report.distances))
    result.add(
        bound_check(
            "trace_distance",
            "½‖ρ_ensemble(t) − ρ_master(t)‖₁",
            report.trace_distance,
            upper=opts["max_trace_distance"],
            detail=f"n={spec.n_traj}, t={t:.4g}",
        )
    )
    if report.slope is not None:
        result.add(
            close_check(
                "sweep_slope",
                "log distance vs log n has slope −1/2",
                report.slope,
                -0.5,
                opts["slope_tolerance"],
            )
        )
    result.add(
        close_check(
            "purity_agreement",
            "Tr ρ_ensemble² ≈ Tr ρ_master²",
            report.purity_ensemble,
            report.purity_master,
            0.1,
            required=False,
        )
    )
    return result


# ────────────────────────────────────────────────────────────────────────────────
# fokker_planck
# ────────────────────────────────────────────────────────────────────────────────


def _run_fokker_planck(config: ExperimentConfig) -> ExperimentResult:
    opts = config.options
    model = config.build_model()
    params = solve_beta(model)
    coeffs = coefficients(model, params)
    omega = _omega(model)
    qbm = model.qbm
    result = ExperimentResult(
        "fokker_planck",
        columns=("t", "q_mean", "p_mean", "mass", "l1_to_thermal"),
        metadata={
            "model": model.describe(),
            "params": _params_dict(params),
            "coefficients": {
                "d_pp": coeffs.d_pp,
                "d_qq": coeffs.d_qq,
                "d_pq": coeffs.d_pq,
                "q_skew": coeffs.q_skew,
                "p_friction": coeffs.p_friction,
                "high_t_ratio": coeffs.high_t_ratio,
            },
        },
    )

    a, b, hbar = model.a, model.b, model.hbar
    expanded = a**2 * params.r0**2 + b**2 * params.sigma_p2**2 - hbar * a * b * params.sigma_p2 + 0.25 * hbar**2 * a**2
    result.add(
        close_check(
            "d_pp_expanded",
            "d_pp = a²R₀² + b²σ_p⁴ − ħabσ_p² + ħ²a²/4",
            coeffs.d_pp,
            expanded,
            1e-10,
            relative=True,
        )
    )
    det = coeffs.d_qq * coeffs.d_pp - 0.25 * coeffs.d_pq**2
    result.add(
        bound_check(
            "diffusion_psd",
            "d_qq d_pp − d_pq²/4 ≥ 0",
            det,
            lower=-1e-10 * max(coeffs.d_qq * coeffs.d_pp, 1e-300),
        )
    )
    high_t = qbm is not None and omega is not None and qbm.kT / (hbar * omega) >= 20.0
    if coeffs.high_t_ratio is not None:
        result.add(
            bound_check(
                "high_temperature_d_pp",
                "d_pp ≈ 2mγkT for kT ≫ ħω",
                coeffs.high_t_ratio,
                lower=0.9,
                upper=1.1,
                detail=f"kT/ħω = {qbm.kT / (hbar * omega):.3g}" if omega else "no oscillator frequency",
                required=high_t,
            )
        )

    try:
        cov = stationary_covariance(coeffs, model)
    except ModelError as exc:
        logger.warning(f"no stationary covariance: {exc}")
        cov = None
    if cov is not None:
        result.metadata["stationary_covariance"] = cov.tolist()
    if cov is not None and qbm is not None and omega is not None:
        var_q, var_p = qbm.kT / (model.m * omega**2), model.m * qbm.kT
        result.add(
            close_check("thermal_var_q", "Σ_qq → kT/(mω²)", cov[0, 0], var_q, 0.05, relative=True, required=high_t)
        )
        result.add(close_check("thermal_var_p", "Σ_pp → mkT", cov[1, 1], var_p, 0.05, relative=True, required=high_t))

    if cov is None:
        return result
    lattice = PhaseSpaceLattice.covering((0.0, 0.0), cov, n=opts["lattice_n"], sigmas=opts["sigmas"])
    start = (opts["offset_sigmas"] * math.sqrt(cov[0, 0]), 0.0)
    f0 = gaussian_field(lattice, start, 0.25 * cov)
    friction = coeffs.p_friction
    if opts["relax_time"] is not None:
        horizon = opts["relax_time"]
    else:
        horizon = 8.0 / (0.5 * friction) if friction > 1e-12 else 10.0
    times = np.linspace(0.0, horizon, opts["n_times"] + 1)[1:]
    fields = propagate_fp(coeffs, model, f0, times)
    thermal = stationary_field(model, lattice) if qbm is not None else None
    energy = []
    for t_k, f in zip(times, fields):
        q_bar, p_bar = f.mean()
        l1 = f.l1_distance(thermal) if thermal is not None else math.nan
        result.rows.append((float(t_k), q_bar, p_bar, f.mass, l1))
        energy.append(model.m * (omega or 0.0) ** 2 * q_bar**2 + p_bar**2 / model.m)
    result.fields["fp_final"] = fields[-1]
    if thermal is not None:
        result.fields["thermal"] = thermal
        result.add(
            bound_check(
                "thermalization_l1",
                "‖f(t) − f_MB‖₁ with f_MB ∝ exp(−p²/2mkT − V/kT)",
                fields[-1].l1_distance(thermal),
                upper=0.05,
                detail=f"t={horizon:.4g}",
                required=high_t,
            )
        )
    if qbm is not None and omega is not None:
        energy = np.asarray(energy)
        usable = energy > 1e-6 * energy[0]
        rate = None
        if usable.sum() >= 3:
            rate = -0.5 * float(np.polyfit(times[usable], np.log(energy[usable]), 1)[0])
        result.add(
            bound_check(
                "relaxation_rate",
                "mω²⟨q⟩² + ⟨p⟩²/m ∝ exp(−2γt)",
                None if rate is None else rate / qbm.gamma,
                lower=0.5,
                upper=2.0,
                detail=f"fitted rate {rate} vs gamma {qbm.gamma:g}",
            )
        )

    # drift-only transport of a narrow packet must follow the classical orbit
    drift_only = coeffs.with_diffusion(0.0, 0.0, 0.0)
    orbit_t = opts["orbit_time"] if opts["orbit_time"] is not None else (
        0.5 * math.pi / omega if omega else horizon / 10.0
    )
    packet = gaussian_field(lattice, start, 0.05 * cov)
    moved = evolve_fp(drift_only, model, packet, orbit_t)
    q_end, p_end = classical_orbit(drift_only, model, start[0], start[1], [orbit_t])[-1]
    q_bar, p_bar = moved.mean()
    miss = max(abs(q_bar - q_end) / lattice.dq, abs(p_bar - p_end) / lattice.dp)
    result.add(
        bound_check(
            "orbit_tracking",
            "drift-only mean follows dq/dt = v_q, dp/dt = v_p",
            miss,
            upper=2.0,
            detail=f"distance in cells after t={orbit_t:.4g}",
        )
    )
    return result


# ────────────────────────────────────────────────────────────────────────────────
# thermalization
# ────────────────────────────────────────────────────────────────────────────────


def _coarse_masses(f: PhaseSpaceField, q_edges: np.ndarray, p_edges: np.ndarray) -> np.ndarray:
    out = np.empty((q_edges.size - 1, p_edges.size - 1))
    for i in range(q_edges.size - 1):
        for j in range(p_edges.size - 1):
            out[i, j] = f.cell_mass((q_edges[i], q_edges[i + 1]), (p_edges[j], p_edges[j + 1]))
    return out


def _run_thermalization(config: ExperimentConfig) -> ExperimentResult:
    opts = config.options
    model, grid = config.build_model(), config.build_grid()
    if model.qbm is None or _omega(model) is None:
        raise ConfigError("thermalization needs a qbm model in a confining harmonic potential", field_path="model")
    params = solve_beta(model)
    coeffs = coefficients(model, params)
    cov = stationary_covariance(coeffs, model)
    qbm, omega = model.qbm, _omega(model)
    t = config.integration.t
    start = tuple(opts["start"])
    if len(start) != 2:
        raise ConfigError("expected [q, p]", field_path="experiment_options.start")

    result = ExperimentResult(
        "thermalization",
        columns=("t", "center_q_mean", "center_p_mean", "center_var_q", "center_var_p", "width_var_x"),
        metadata={
            "model": model.describe(),
            "params": _params_dict(params),
            "stationary_covariance": cov.tolist(),
            "maxwell_boltzmann_covariance": [qbm.kT / (model.m * omega**2), model.m * qbm.kT],
        },
    )

    lattice = PhaseSpaceLattice.covering((0.0, 0.0), cov, n=opts["lattice_n"], sigmas=opts["sigmas"])
    f_fp = fp_propagator(coeffs, model, lattice, start, 0.0, t)
    result.fields["fp"] = f_fp

    psi0 = coherent_state(grid, params, *start)
    ensemble = run_ensemble(_ensemble_spec(config, model, psi0, t, params), threads=config.threads)
    stack = ensemble.moment_stack()
    for i, t_k in enumerate(ensemble.times):
        centers = stack[:, i, :2]
        result.rows.append(
            (
                float(t_k),
                float(centers[:, 0].mean()),
                float(centers[:, 1].mean()),
                float(centers[:, 0].var()),
                float(centers[:, 1].var()),
                float(stack[:, i, 2].mean()),
            )
        )

    half_q = opts["compare_sigmas"] * math.sqrt(cov[0, 0])
    half_p = opts["compare_sigmas"] * math.sqrt(cov[1, 1])
    nb = opts["compare_bins"]
    coarse = PhaseSpaceLattice(-half_q, half_q, nb, -half_p, half_p, nb)
    hist = estimate_f(ensemble, lattice=coarse)
    result.fields["ensemble_histogram"] = hist.as_field()
    hist_mass = hist.counts / float(ensemble.spec.n_traj)
    fp_mass = _coarse_masses(f_fp, coarse.q_edges, coarse.p_edges)
    result.add(
        bound_check(
            "histogram_vs_fp",
            "Σ_bins |P_ensemble − P_FP| between trajectory centers and the FP solution",
            float(np.abs(hist_mass - fp_mass).sum()),
            upper=opts["max_histogram_l1"],
            detail=f"{nb}×{nb} bins over ±{opts['compare_sigmas']:g}σ, n={ensemble.spec.n_traj}",
        )
    )
    final = stack[:, -1, :2]
    result.add(close_check("center_var_q", "Var ⟨x⟩_j → Σ_qq", float(final[:, 0].var()), cov[0, 0], 0.15, relative=True, required=False))
    result.add(close_check("center_var_p", "Var ⟨p⟩_j → Σ_pp", float(final[:, 1].var()), cov[1, 1], 0.15, relative=True, required=False))

    rho = reconstruct_rho(ensemble)
    measured = fit_gaussian_kernel(rho, rel_cutoff=opts["kernel_cutoff"])
    reference = fit_gaussian_kernel(
        density_from_field(gaussian_field(lattice, (0.0, 0.0), cov), params, grid), rel_cutoff=opts["kernel_cutoff"]
    )
    closed = thermal_density_exponents(params, model)
    result.metadata["kernel"] = {
        "measured": measured.as_dict(),
        "stationary_fp": reference.as_dict(),
        "maxwell_boltzmann": closed.as_dict(),
    }
    kernel_eq = "ρ(x,y) ∝ exp(−A(x−y)² − B(x²+y²) − iC(x²−y²))"
    tol = opts["kernel_tolerance"]
    result.add(close_check("kernel_A", kernel_eq, measured.A, reference.A, tol, relative=True))
    result.add(close_check("kernel_B", kernel_eq, measured.B, reference.B, tol, relative=True))
    closed_eq = "A = |β|²/Δ + mkT/2ħ², B = mω²Reβ/(2kTΔ), Δ = mω²/2kT + β + β*"
    result.add(close_check("kernel_A_thermal", closed_eq, measured.A, closed.A, 0.1, relative=True, required=False))
    result.add(close_check("kernel_B_thermal", closed_eq, measured.B, closed.B, 0.1, relative=True, required=False))
    return result


# ────────────────────────────────────────────────────────────────────────────────
# histories
# ────────────────────────────────────────────────────────────────────────────────


def _run_histories(config: ExperimentConfig) -> ExperimentResult:
    opts = config.options
    model, grid = config.build_model(), config.build_grid()
    params = solve_beta(model)
    coeffs = coefficients(model, params)
    rates = estimate_rates(params, model)
    t1 = opts["t1_taus"] * rates.tau
    t2 = t1 + opts["spacing_taus"] * rates.tau
    q_edges, p_edges = opts["q_edges"], opts["p_edges"]
    cells = tile_cells(q_edges, p_edges, model.hbar)
    projectors = [build_projector(c, params, grid) for c in cells]
    start = tuple(opts["start"])
    if len(start) != 2:
        raise ConfigError("expected [q, p]", field_path="experiment_options.start")
    rho0 = pure_density(coherent_state(grid, params, *start))
    lattice = PhaseSpaceLattice(q_edges[0], q_edges[-1], opts["lattice_n"], p_edges[0], p_edges[-1], opts["lattice_n"])

    comparison = history_probabilities_vs_fp(
        model, rho0, params, coeffs, projectors, t1, t2, lattice, opts["master_dt"], threads=config.threads
    )
    result = ExperimentResult(
        "histories",
        columns=("alpha1", "alpha2", "p_histories", "p_fp"),
        metadata={
            "model": model.describe(),
            "params": _params_dict(params),
            "t1": t1,
            "t2": t2,
            "cells": [c.label() for c in cells],
            "cell_area": cells[0].area,
            "comparison": comparison.as_dict(),
        },
    )
    n = len(cells)
    for i in range(n):
        for j in range(n):
            result.rows.append((float(i), float(j), float(comparison.probabilities[i, j]), float(comparison.fp_probabilities[i, j])))

    result.add(
        bound_check(
            "epsilon",
            "max |D(ᾱ,ᾱ')| / (D(ᾱ,ᾱ)D(ᾱ',ᾱ'))^½ over ᾱ ≠ ᾱ'",
            comparison.epsilon,
            upper=opts["max_epsilon"],
        )
    )
    result.add(
        bound_check(
            "single_slice",
            "Σ_α₂ p(α₁, α₂) = Husimi mass of ρ(t₁) in α₁",
            comparison.single_slice_discrepancy,
            upper=0.05,
        )
    )
    result.add(
        bound_check(
            "two_slice",
            "p(α₁, α₂) ≈ ∫_α₁ Q(t₁) · FP transition into α₂",
            comparison.two_slice_discrepancy,
            upper=0.1,
        )
    )
    a1, a2 = comparison.modal_history
    result.add(
        flag_check(
            "classical_order",
            "the modal history follows the drift-only orbit from α₁ into α₂",
            comparison.classical_peak_ok,
            detail=f"{cells[a1].label()} -> {cells[a2].label()}",
        )
    )
    rho1 = evolve(model, rho0, t1, opts["master_dt"])
    result.fields["husimi_t1"] = husimi(rho1, params, lattice)
    result.add(
        bound_check(
            "completeness_on_support",
            "‖Σ_α P_α − 1‖ on the support of ρ(t₁)",
            completeness_defect(projectors, rho1),
            upper=0.1,
            required=False,
        )
    )
    if opts["area_sweep"]:
        tilings = {}
        for k in (2, 3):
            qe = np.linspace(q_edges[0], q_edges[-1], k + 1)
            pe = np.linspace(p_edges[0], p_edges[-1], k + 1)
            tiles = tile_cells(qe, pe, model.hbar)
            tilings[tiles[0].area] = tiles
        sweep = epsilon_vs_area(model, rho0, params, tilings, t1, t2, opts["master_dt"])
        result.metadata["epsilon_vs_area"] = {f"{area:.6g}": eps for area, eps in sweep.items()}
    return result


# ────────────────────────────────────────────────────────────────────────────────
# rates
# ────────────────────────────────────────────────────────────────────────────────


def _run_rates(config: ExperimentConfig) -> ExperimentResult:
    opts = config.options
    model = config.build_model()
    params = solve_beta(model)
    base = estimate_rates(params, model)
    result = ExperimentResult(
        "rates",
        columns=("ell", "tau", "tau_superposition", "tau_decoherence"),
        metadata={
            "model": model.describe(),
            "params": _params_dict(params),
            "rates": base.as_dict(),
            "validity_ratio": validity_ratio(model, params.valid_at, params.sigma_x2),
        },
    )
    expected_tau = 1.0 / (2.0 * model.a**2 * params.sigma_x2 + 2.0 * model.b**2 * params.sigma_p2)
    result.add(close_check("tau", "τ = (2a²σ_x² + 2b²σ_p²)⁻¹", base.tau, expected_tau, 1e-12, relative=True))
    result.add(bound_check("tau_positive", "τ > 0", base.tau, lower=1e-300))
    if base.tau_thermal is not None:
        q = model.qbm
        result.add(
            close_check(
                "tau_thermal", "τ_th = (ħ/γkT)^½", base.tau_thermal, math.sqrt(q.hbar / (q.gamma * q.kT)), 1e-12,
                relative=True,
            )
        )
    for ell in opts["ells"]:
        est = estimate_rates(params, model, ell)
        nan = float("nan")
        result.rows.append(
            (
                float(ell),
                est.tau,
                nan if est.tau_superposition is None else est.tau_superposition,
                nan if est.tau_decoherence is None else est.tau_decoherence,
            )
        )
        if est.tau_decoherence is not None and est.tau_superposition is not None:
            # a² = 4mγkT/ħ² for a Brownian-motion model
            result.add(
                close_check(
                    f"decoherence_vs_superposition_ell{ell:g}",
                    "ħ²/(ℓ²mγkT) = 4/(ℓ²a²)",
                    est.tau_decoherence / est.tau_superposition,
                    4.0,
                    1e-12,
                    relative=True,
                )
            )
    return result


# ────────────────────────────────────────────────────────────────────────────────

EXPERIMENTS: Dict[str, Experiment] = {
    e.name: e
    for e in (
        Experiment(
            "stationary",
            "Stationary coherent-state widths, their stability under trajectories, and moment drifts",
            "stationary Gaussian fixed point",
            _run_stationary,
            {
                "duration_taus": None,
                "q0": 0.0,
                "p0": 0.0,
                "ensemble_tolerance": 0.10,
                "drift_samples": 100_000,
                "drift_dt": 1e-3,
            },
        ),
        Experiment(
            "localization",
            "Nonpositive drift of (ΔA)² and its decay from superpositions on trajectories",
            "localization of (ΔA)² onto coherent states",
            _run_localization,
            {
                "ell": 10.0,
                "n_samples": 10_000,
                "sample_seed": 0,
                "duration_taus": None,
                "include_broad": False,
                "diagonality": True,
            },
        ),
        Experiment(
            "duality",
            "Ensemble-averaged trajectories against the master equation, with the n^-1/2 sweep",
            "unraveling of the master equation",
            _run_duality,
            {
                "duration_taus": 5.0,
                "q0": 0.0,
                "p0": 0.0,
                "n_sweep": (50, 200, 800),
                "master_dt": None,
                "max_trace_distance": 0.08,
                "slope_tolerance": 0.15,
            },
        ),
        Experiment(
            "fokker_planck",
            "Phase-space diffusion coefficients, relaxation to Maxwell-Boltzmann and orbit tracking",
            "classical phase-space limit",
            _run_fokker_planck,
            {
                "lattice_n": 80,
                "sigmas": 6.0,
                "offset_sigmas": 1.0,
                "relax_time": None,
                "n_times": 40,
                "orbit_time": None,
            },
        ),
        Experiment(
            "thermalization",
            "Trajectory-center histogram and thermal density-matrix kernel against Fokker-Planck",
            "thermal equilibrium of localized trajectories",
            _run_thermalization,
            {
                "start": (1.0, 0.0),
                "lattice_n": 64,
                "sigmas": 6.0,
                "compare_bins": 10,
                "compare_sigmas": 4.0,
                "kernel_cutoff": 1e-2,
                "max_histogram_l1": 0.15,
                "kernel_tolerance": 0.1,
            },
        ),
        Experiment(
            "histories",
            "Two-slice decoherence functional of phase-space cells against Fokker-Planck transitions",
            "decoherent histories of phase-space cells",
            _run_histories,
            {
                "q_edges": (-7.53, -2.51, 2.51, 7.53),
                "p_edges": (-7.53, -2.51, 2.51, 7.53),
                "start": (-5.0, 0.0),
                "t1_taus": 5.0,
                "spacing_taus": 5.0,
                "lattice_n": 60,
                "master_dt": None,
                "max_epsilon": 0.1,
                "area_sweep": False,
            },
        ),
        Experiment(
            "rates",
            "Localization, superposition and thermal time scales for the configured model",
            "localization and decoherence rates",
            _run_rates,
            {"ells": (1.0, 2.0, 5.0, 10.0, 20.0)},
        ),
    )
}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return EXPERIMENTS[config.experiment].run(config)
