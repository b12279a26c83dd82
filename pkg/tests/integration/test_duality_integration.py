"""
Integration test: trajectory ensembles converge to the master equation.
"""

import pytest

from qsdlab.ensemble import EnsembleSpec, compare_to_master, reconstruct_rho, run_ensemble
from qsdlab.gaussian import coherent_state, solve_beta, superposition
from qsdlab.master import evolve, pure_density, trace_distance
from qsdlab.model import Harmonic, QBMParams, from_qbm, standard


@pytest.mark.slow
def test_trace_distance_shrinks_with_ensemble_size(small_grid):
    model = standard(1.0, 0.0)
    params = solve_beta(model)
    psi0 = coherent_state(small_grid, params, 0.0, 0.0)
    report = compare_to_master(EnsembleSpec(model, psi0, 1.0, n_traj=400), n_sweep=(25, 400))

    assert report.n_values == [25, 400]
    assert report.distances[1] < report.distances[0]
    assert report.slope < 0
    assert report.trace_distance == pytest.approx(report.distances[1])


@pytest.mark.slow
def test_parallel_ensemble_matches_inline(small_grid):
    model = from_qbm(QBMParams(0.5, 2.0), Harmonic(1.0))
    params = solve_beta(model)
    cat = superposition(small_grid, params, [(-2.0, 0.0), (2.0, 0.0)])
    spec = EnsembleSpec(model, cat, 0.2, n_traj=12, chunk=4, record_every=10)

    inline = run_ensemble(spec, threads=1)
    spawned = run_ensemble(spec, threads=3)

    assert [r.seed for r in spawned.records] == list(range(12))
    assert (inline.moment_stack() == spawned.moment_stack()).all()


@pytest.mark.slow
def test_cat_state_decoheres_like_the_master_equation(small_grid):
    model = standard(1.0, 0.0)
    params = solve_beta(model)
    cat = superposition(small_grid, params, [(-2.0, 0.0), (2.0, 0.0)])
    rho_ens = reconstruct_rho(EnsembleSpec(model, cat, 0.5, n_traj=400))
    rho_master = evolve(model, pure_density(cat), 0.5)

    assert trace_distance(rho_ens, rho_master) < 0.3
