"""
Integration tests for the phase-space experiments on coarse lattices.
"""

import numpy as np
import pytest

from qsdlab.config import parse_config
from qsdlab.experiments import run_experiment
from qsdlab.fokker_planck import PhaseSpaceLattice, coefficients
from qsdlab.gaussian import coherent_state, solve_beta
from qsdlab.histories import build_projector, history_probabilities_vs_fp, tile_cells
from qsdlab.master import pure_density
from qsdlab.model import QBMParams, from_qbm


@pytest.mark.slow
def test_fokker_planck_experiment_conserves_mass():
    config = parse_config(
        {
            "experiment": "fokker_planck",
            "model": {"kind": "qbm", "gamma": 0.1, "kT": 20.0, "potential": {"kind": "harmonic", "omega": 1.0}},
            "experiment_options": {"lattice_n": 40, "n_times": 10},
        }
    )
    result = run_experiment(config)
    by_name = {c.name: c for c in result.checks}

    assert by_name["d_pp_expanded"].passed
    assert by_name["diffusion_psd"].passed
    assert by_name["orbit_tracking"].passed
    masses = np.array([row[3] for row in result.rows])
    np.testing.assert_allclose(masses, 1.0, atol=1e-8)
    assert {"fp_final", "thermal"} <= set(result.fields)


@pytest.mark.slow
def test_history_probabilities_against_fokker_planck(small_grid):
    model = from_qbm(QBMParams(0.2, 2.0))
    params = solve_beta(model)
    coeffs = coefficients(model, params)
    cells = tile_cells([-8.0, 0.0, 8.0], [-6.0, 6.0])
    projectors = [build_projector(c, params, small_grid) for c in cells]
    rho0 = pure_density(coherent_state(small_grid, params, -4.0, 0.0))
    lattice = PhaseSpaceLattice(-8.0, 8.0, 24, -6.0, 6.0, 24)

    comparison = history_probabilities_vs_fp(model, rho0, params, coeffs, projectors, 0.2, 0.4, lattice)

    assert comparison.probabilities.shape == comparison.fp_probabilities.shape == (2, 2)
    assert comparison.modal_history == (0, 0)
    assert comparison.classical_peak_ok
    assert np.all(comparison.fp_probabilities.sum(axis=1) <= 1.0 + 1e-9)
    assert set(comparison.as_dict()) >= {"epsilon", "decoherent", "two_slice_discrepancy"}
