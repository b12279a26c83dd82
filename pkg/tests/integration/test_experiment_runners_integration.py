"""
Integration tests: each experiment runner on a reduced configuration.

Sizes are cut down from the shipped configs; where a check's tolerance is a
run option it is widened to match the smaller sample.
"""

import pytest

from qsdlab.config import parse_config
from qsdlab.experiments import run_experiment


def _failed(result):
    return [(c.name, c.measured) for c in result.failed_checks]


@pytest.mark.slow
def test_localization_runner():
    config = parse_config(
        {
            "experiment": "localization",
            "model": {"kind": "standard", "a": 1.0, "b": 0.0},
            "grid": {"n_points": 128, "x_min": -20.0, "x_max": 20.0},
            "integration": {"n_traj": 16, "record_every": 10},
            "experiment_options": {"ell": 6.0, "n_samples": 500, "duration_taus": 1.0},
        }
    )
    result = run_experiment(config)
    names = {c.name for c in result.checks}

    assert result.passed, _failed(result)
    assert {"drift_nonpositive", "cat_monotone", "cat_envelope", "cat_efold_time", "branch_coherence"} <= names
    assert result.rows[0][1] > result.rows[-1][1]


@pytest.mark.slow
def test_duality_runner():
    config = parse_config(
        {
            "experiment": "duality",
            "model": {"kind": "standard", "a": 1.0, "b": 0.0},
            "grid": {"n_points": 64, "x_min": -10.0, "x_max": 10.0},
            "integration": {"n_traj": 400, "record_every": 50},
            "experiment_options": {
                "duration_taus": 2.0,
                "n_sweep": [25, 100, 400],
                "max_trace_distance": 0.25,
                "slope_tolerance": 0.25,
            },
        }
    )
    result = run_experiment(config)

    assert result.passed, _failed(result)
    assert [row[0] for row in result.rows] == [25.0, 100.0, 400.0]
    assert result.rows[-1][1] < result.rows[0][1]


@pytest.mark.slow
def test_thermalization_runner(quiet_warnings):
    # t = 6 is six friction times for gamma = 0.5; 200 centers in 4x4 bins
    config = parse_config(
        {
            "experiment": "thermalization",
            "model": {"kind": "qbm", "gamma": 0.5, "kT": 2.0, "potential": {"kind": "harmonic", "omega": 1.0}},
            "grid": {"n_points": 64, "x_min": -8.0, "x_max": 8.0},
            "integration": {"t": 6.0, "n_traj": 200, "record_every": 200},
            "experiment_options": {
                "lattice_n": 32,
                "compare_bins": 4,
                "compare_sigmas": 3.0,
                "max_histogram_l1": 0.5,
                "kernel_tolerance": 0.3,
            },
        }
    )
    result = run_experiment(config)
    by_name = {c.name: c for c in result.checks}

    assert result.passed, _failed(result)
    assert {"histogram_vs_fp", "kernel_A", "kernel_B"} <= set(by_name)
    assert {"fp", "ensemble_histogram"} <= set(result.fields)


@pytest.mark.slow
def test_histories_runner():
    config = parse_config(
        {
            "experiment": "histories",
            "model": {"kind": "qbm", "gamma": 0.2, "kT": 2.0},
            "grid": {"n_points": 64, "x_min": -12.0, "x_max": 12.0},
            "experiment_options": {"start": [-5.0, 0.0], "lattice_n": 40},
        }
    )
    result = run_experiment(config)
    by_name = {c.name: c for c in result.checks}

    assert result.passed, _failed(result)
    assert by_name["classical_order"].passed
    assert len(result.rows) == 9 * 9
    assert "husimi_t1" in result.fields
