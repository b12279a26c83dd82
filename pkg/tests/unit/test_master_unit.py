"""Density matrices, Lindblad right-hand sides and the RK4 propagator."""

import numpy as np
import pytest

from qsdlab.diagnostics import IntegrationMonitor
from qsdlab.errors import GridMismatch, GridTooLarge, StabilityViolation
from qsdlab.gaussian import coherent_state, gaussian_packet, solve_beta, superposition
from qsdlab.hilbert import Grid
from qsdlab.master import (
    DensityMatrix,
    evolve,
    expectation,
    generic_lindblad_rhs,
    lindblad_rhs,
    mixture,
    propagate,
    pure_density,
    purity,
    stability_bound,
    superoperator,
    trace_distance,
)
from qsdlab.model import Harmonic, QBMParams, from_qbm, standard


@pytest.fixture
def cat_rho(small_grid):
    model = standard(1.0, 0.0)
    params = solve_beta(model)
    return pure_density(superposition(small_grid, params, [(-2.0, 0.0), (2.0, 0.0)]))


class TestDensityMatrix:
    def test_pure_state_properties(self, cat_rho):
        assert cat_rho.trace() == pytest.approx(1.0)
        assert cat_rho.hermiticity_defect() < 1e-14
        assert purity(cat_rho) == pytest.approx(1.0)
        assert cat_rho.eigenvalues()[-1] == pytest.approx(1.0)
        assert cat_rho.min_eigenvalue() > -1e-12

    def test_shape_is_checked(self, small_grid):
        with pytest.raises(ValueError, match="does not fit"):
            DensityMatrix(small_grid, np.eye(16))

    def test_mixture_is_normalized(self, small_grid, free_params):
        a = coherent_state(small_grid, free_params, -2.0, 0.0)
        b = coherent_state(small_grid, free_params, 2.0, 0.0)
        rho = mixture([a, b], [1.0, 3.0])
        assert rho.trace() == pytest.approx(1.0)
        assert purity(rho) == pytest.approx(0.25**2 + 0.75**2, rel=1e-4)
        with pytest.raises(ValueError):
            mixture([a, b], [1.0])
        with pytest.raises(ValueError):
            mixture([a], [-1.0])

    def test_arithmetic_checks_grids(self, cat_rho):
        other = DensityMatrix(Grid(32, -4.0, 4.0), np.eye(32))
        with pytest.raises(GridMismatch):
            cat_rho + other
        assert (2.0 * cat_rho).trace() == pytest.approx(2.0)

    def test_trace_distance(self, small_grid, free_params):
        a = pure_density(coherent_state(small_grid, free_params, -3.0, 0.0))
        b = pure_density(coherent_state(small_grid, free_params, 3.0, 0.0))
        assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-10)
        assert trace_distance(a, b) == pytest.approx(1.0, abs=1e-6)

    def test_operator_expectation(self, small_grid, free_params):
        rho = pure_density(coherent_state(small_grid, free_params, 1.5, -0.5))
        assert expectation(rho, "x").real == pytest.approx(1.5, abs=1e-8)
        assert expectation(rho, "p").real == pytest.approx(-0.5, abs=1e-8)


@pytest.mark.parametrize(
    "model",
    [
        standard(1.0, 0.0),
        standard(0.6, 0.4, potential=Harmonic(1.0), theta=0.3),
        from_qbm(QBMParams(0.5, 2.0), Harmonic(1.0)),
    ],
    ids=["free", "harmonic-rotated", "qbm"],
)
def test_explicit_and_generic_forms_agree(model, cat_rho):
    explicit = lindblad_rhs(model, cat_rho).elements
    generic = generic_lindblad_rhs(model, cat_rho).elements
    np.testing.assert_allclose(explicit, generic, atol=1e-9 * np.max(np.abs(generic)))


def test_rhs_preserves_trace_and_hermiticity(cat_rho):
    model = from_qbm(QBMParams(0.5, 2.0), Harmonic(1.0))
    drho = lindblad_rhs(model, cat_rho)
    assert abs(drho.trace()) < 1e-9
    assert drho.hermiticity_defect() < 1e-9


def test_position_measurement_kills_coherences(cat_rho, small_grid):
    model = standard(1.0, 0.0)
    rho_t = evolve(model, cat_rho, 0.5)
    i, j = np.argmin(np.abs(small_grid.x + 2.0)), np.argmin(np.abs(small_grid.x - 2.0))
    assert abs(rho_t.elements[i, j]) < 0.05 * abs(cat_rho.elements[i, j])
    assert rho_t.trace() == pytest.approx(1.0, abs=1e-8)
    assert purity(rho_t) < 0.9


class TestPropagate:
    def test_zero_time_returns_input(self, cat_rho):
        assert evolve(standard(1.0, 0.0), cat_rho, 0.0) is cat_rho

    def test_times_must_ascend(self, cat_rho):
        with pytest.raises(ValueError, match="ascending"):
            propagate(standard(1.0, 0.0), cat_rho, [0.2, 0.1])

    def test_oversized_step_is_rejected(self, cat_rho, small_grid):
        model = standard(1.0, 0.0)
        bound = stability_bound(model, small_grid)
        monitor = IntegrationMonitor("master")
        with pytest.raises(StabilityViolation) as excinfo:
            propagate(model, cat_rho, [1.0], dt=2.0 * bound, monitor=monitor)
        assert excinfo.value.diagnostics["error_type"] == "StabilityViolation"
        assert monitor.err_cnt == 1

    def test_monitor_records_invariants(self, cat_rho):
        monitor = IntegrationMonitor("master")
        out = propagate(standard(1.0, 0.0), cat_rho, [0.05, 0.1], monitor=monitor, positivity_every=5)
        assert len(out) == 2
        snap = monitor.snapshot()
        assert snap["steps"] > 0
        assert snap["max_norm_drift"] < 1e-8
        assert snap["model_time"] == pytest.approx(0.1)


class TestSuperoperator:
    def test_matches_rhs(self, small_grid, cat_rho):
        model = standard(0.8, 0.2, potential=Harmonic(1.0))
        gen = superoperator(model, small_grid)
        flat = gen @ cat_rho.elements.reshape(-1)
        np.testing.assert_allclose(flat.reshape(32, 32), lindblad_rhs(model, cat_rho).elements, atol=1e-10)

    def test_size_limit(self):
        with pytest.raises(GridTooLarge):
            superoperator(standard(1.0, 0.0), Grid(128, -10.0, 10.0))


def test_phase_of_lindblad_operator_drops_out(cat_rho):
    plain = standard(0.6, 0.4, potential=Harmonic(1.0))
    turned = standard(0.6, 0.4, potential=Harmonic(1.0), theta=1.1)
    ref = evolve(plain, cat_rho, 0.05)
    out = evolve(turned, cat_rho, 0.05, form="generic")
    np.testing.assert_allclose(out.elements, ref.elements, rtol=0, atol=1e-8)


class TestPositivity:
    """A packet narrower than the thermal length, 1/(4kT) > σ² = 1/16."""

    @pytest.fixture
    def narrow(self):
        grid = Grid(64, -4.0, 4.0)
        return pure_density(gaussian_packet(grid, 4.0, 0.0, 0.0))

    def test_lindblad_form_stays_positive(self, narrow):
        model = from_qbm(QBMParams(0.5, 2.0), Harmonic(1.0))
        assert evolve(model, narrow, 0.005).min_eigenvalue() > -1e-9

    def test_caldeira_leggett_goes_negative(self, narrow):
        model = from_qbm(QBMParams(0.5, 2.0), Harmonic(1.0))
        rho = evolve(model, narrow, 0.005, caldeira_leggett=True)
        # first order: (a² − γ/σ²)·σ²·t = −1.25e−3
        assert rho.min_eigenvalue() < -5e-4
        assert rho.trace() == pytest.approx(1.0, abs=1e-8)
