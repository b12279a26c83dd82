"""Ito steps, noise streams, trajectories and the moment-drift check."""

import math

import numpy as np
import pytest

from qsdlab.errors import NormCollapse
from qsdlab.gaussian import coherent_state, solve_beta, superposition
from qsdlab.hilbert import Grid, WaveFunction, measure_moments
from qsdlab.model import Harmonic, QBMParams, from_qbm, standard
from qsdlab.qsd import (
    NoiseProcess,
    TrajectoryRecord,
    analytic_moment_drift,
    default_timestep,
    integrate_batch,
    ito_increment,
    ito_step,
    moment_drift_check,
    run_trajectory,
)


class TestNoiseProcess:
    def test_stream_does_not_depend_on_chunking(self):
        a, b = NoiseProcess(11), NoiseProcess(11)
        whole = a.increments(1e-3, 10)
        parts = np.concatenate([b.increments(1e-3, 3), b.increments(1e-3, 7)])
        np.testing.assert_array_equal(whole, parts)
        assert a.drawn == b.drawn == 10

    def test_increment_statistics(self):
        dxi = NoiseProcess(0).increments(0.01, 200_000)
        assert abs(np.mean(dxi)) < 1e-3
        assert np.mean(np.abs(dxi) ** 2) == pytest.approx(0.01, rel=0.02)
        # E[dξ²] = 0
        assert abs(np.mean(dxi**2)) < 5 * 0.01 / math.sqrt(200_000)

    def test_rotation_is_a_phase(self):
        plain = NoiseProcess(3).increments(0.1, 5)
        turned = NoiseProcess(3, rotation=0.7).increments(0.1, 5)
        np.testing.assert_allclose(turned, plain * np.exp(0.7j))


class TestItoStep:
    def test_zero_noise_step_keeps_coherent_state_stationary(self, grid, free_model, free_params):
        psi = coherent_state(grid, free_params, 0.0, 0.0)
        out = ito_step(free_model, psi, 1e-3, 0.0, scheme="split")
        m = measure_moments(out)
        assert out.norm() == pytest.approx(1.0)
        assert m.var_x == pytest.approx(free_params.sigma_x2, rel=1e-5)
        assert m.r == pytest.approx(free_params.r0, rel=1e-5)

    def test_rejects_nonpositive_dt(self, grid, free_model, free_params):
        with pytest.raises(ValueError, match="dt"):
            ito_increment(free_model, coherent_state(grid, free_params, 0, 0), 0.0, 0.0)

    def test_unknown_scheme(self, grid, free_model, free_params):
        with pytest.raises(ValueError, match="scheme"):
            ito_step(free_model, coherent_state(grid, free_params, 0, 0), 1e-3, 0.0, scheme="rk4")

    def test_norm_collapse(self, grid):
        # two spikes at ±d about ⟨x⟩ = 0; with a²·dt·d² = 2 the dissipative update cancels both
        amps = np.zeros(grid.n_points)
        amps[[60, 68]] = 1.0
        psi = WaveFunction(grid, amps).normalize()
        dt = 1e-12
        d = grid.x[68] - grid.x[64]
        model = standard(math.sqrt(2.0 / (dt * d**2)), 0.0)
        with pytest.raises(NormCollapse) as excinfo:
            ito_step(model, psi, dt, 0.0, scheme="euler")
        assert excinfo.value.diagnostics["dt"] == dt


def test_run_trajectory_is_deterministic(grid, free_model, free_params):
    psi = superposition(grid, free_params, [(-2.0, 0.0), (2.0, 0.0)])
    r1 = run_trajectory(free_model, psi, 0.05, 1e-4, NoiseProcess(5), record_every=100)
    r2 = run_trajectory(free_model, psi, 0.05, 1e-4, NoiseProcess(5), record_every=100)
    np.testing.assert_array_equal(r1.moment_array, r2.moment_array)
    np.testing.assert_array_equal(r1.final_state.amplitudes, r2.final_state.amplitudes)
    assert r1.times.tolist() == pytest.approx([0.0, 0.01, 0.02, 0.03, 0.04, 0.05])
    assert r1.final_state.norm() == pytest.approx(1.0)


def test_batch_matches_single_runs(grid, free_model, free_params):
    psi = coherent_state(grid, free_params, 1.0, 0.0)
    batch = integrate_batch(free_model, psi, [NoiseProcess(1), NoiseProcess(2)], 0.02, 1e-4, 50)
    single = run_trajectory(free_model, psi, 0.02, 1e-4, NoiseProcess(2), record_every=50)
    np.testing.assert_allclose(batch[1].moment_array, single.moment_array, rtol=0, atol=1e-12)
    assert [r.seed for r in batch] == [1, 2]


def test_records_delta_a2_and_snapshots(grid, free_model, free_params):
    psi = coherent_state(grid, free_params, 0.0, 0.0)
    rec = run_trajectory(
        free_model, psi, 0.02, 1e-3, NoiseProcess(0), record_every=5, params=free_params, snapshot_times=(0.01,)
    )
    assert rec.delta_A2.shape == rec.times.shape
    assert rec.delta_A2[0] == pytest.approx(0.0, abs=1e-9)
    assert set(rec.snapshots) == {0.01}
    assert rec.final_moments.var_x == pytest.approx(free_params.sigma_x2, rel=2e-2)


def test_record_rejects_unordered_times(grid):
    psi = WaveFunction(grid, np.ones(grid.n_points))
    with pytest.raises(ValueError, match="increasing"):
        TrajectoryRecord(0, np.array([0.0, 0.0]), np.zeros((2, 5)), psi)


def test_record_every_must_be_positive(grid, free_model, free_params):
    with pytest.raises(ValueError, match="record_every"):
        integrate_batch(free_model, coherent_state(grid, free_params, 0, 0), [NoiseProcess(0)], 0.1, 1e-3, 0)


class TestMomentDrift:
    def test_analytic_drift_of_stationary_state(self, grid, free_model, free_params):
        drift = analytic_moment_drift(free_model, coherent_state(grid, free_params, 0.0, 0.0))
        assert drift.as_tuple() == pytest.approx((0.0,) * 5, abs=1e-8)

    def test_analytic_drift_harmonic_mean(self, grid):
        model = from_qbm(QBMParams(0.5, 2.0), Harmonic(1.0))
        params = solve_beta(model)
        psi = coherent_state(grid, params, 2.0, 0.0)
        drift = analytic_moment_drift(model, psi)
        assert drift.x_mean == pytest.approx(0.0, abs=1e-8)
        assert drift.p_mean == pytest.approx(-2.0, abs=1e-8)

    def test_monte_carlo_agrees_with_analytic(self, grid):
        model = standard(1.0, 0.2, potential=Harmonic(1.0))
        params = solve_beta(model)
        cat = superposition(grid, params, [(-1.5, 0.0), (1.5, 0.0)])
        report = moment_drift_check(model, cat, 4000, 1e-3, seed=2)
        assert set(report.entries) == {"x_mean", "p_mean", "var_x", "var_p", "r"}
        assert report.max_abs_z <= 4.0
        assert report.as_dict()["var_x"]["analytic"] < 0


class TestDefaultTimestep:
    def test_bounded_by_dissipation_at_grid_edge(self, grid, free_model):
        dt = default_timestep(free_model, grid)
        gamma_max = 0.5 * grid.length**2
        assert dt <= 0.25 / gamma_max * (1 + 1e-12)
        assert dt > 0

    def test_euler_is_stricter_than_split(self):
        grid = Grid(128, -10.0, 10.0)
        model = standard(0.1, 0.0, potential=Harmonic(1.0))
        assert default_timestep(model, grid, scheme="euler") < default_timestep(model, grid, scheme="split")

    def test_unknown_scheme(self, grid, free_model):
        with pytest.raises(ValueError):
            default_timestep(free_model, grid, scheme="implicit")


def test_phase_of_lindblad_operator_is_absorbed_by_the_noise(grid):
    plain = standard(0.7, 0.3, potential=Harmonic(1.0))
    turned = standard(0.7, 0.3, potential=Harmonic(1.0), theta=0.9)
    params = solve_beta(plain)
    cat = superposition(grid, params, [(-2.0, 0.0), (2.0, 0.0)])
    ref = run_trajectory(plain, cat, 0.05, 1e-4, NoiseProcess(8), record_every=100)
    out = run_trajectory(turned, cat, 0.05, 1e-4, NoiseProcess(8, rotation=-0.9), record_every=100)
    np.testing.assert_allclose(out.moment_array, ref.moment_array, rtol=0, atol=1e-10)
