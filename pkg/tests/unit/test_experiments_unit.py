"""Experiment registry, option coercion, checks and the cheap experiments."""

import math

import pytest

from qsdlab.config import parse_config
from qsdlab.errors import ConfigError
from qsdlab.experiments import (
    EXPERIMENTS,
    ExperimentResult,
    bound_check,
    close_check,
    flag_check,
    run_experiment,
)


def test_registry_names():
    assert sorted(EXPERIMENTS) == [
        "duality",
        "fokker_planck",
        "histories",
        "localization",
        "rates",
        "stationary",
        "thermalization",
    ]
    for name, exp in EXPERIMENTS.items():
        assert exp.name == name
        assert exp.topic and exp.description


class TestOptionCoercion:
    def test_defaults_are_filled(self):
        opts = EXPERIMENTS["duality"].resolve_options({"q0": 1})
        assert opts["q0"] == 1.0 and isinstance(opts["q0"], float)
        assert opts["n_sweep"] == (50, 200, 800)

    def test_integer_lists(self):
        opts = EXPERIMENTS["duality"].resolve_options({"n_sweep": [10, 20]})
        assert opts["n_sweep"] == (10, 20)
        with pytest.raises(ConfigError, match="integers") as excinfo:
            EXPERIMENTS["duality"].resolve_options({"n_sweep": [10, 2.5]})
        assert excinfo.value.field_path == "experiment_options.n_sweep"

    def test_booleans_are_strict(self):
        with pytest.raises(ConfigError, match="boolean"):
            EXPERIMENTS["localization"].resolve_options({"include_broad": 1})
        with pytest.raises(ConfigError, match="boolean"):
            EXPERIMENTS["localization"].resolve_options({"ell": True})

    def test_integer_options(self):
        assert EXPERIMENTS["localization"].resolve_options({"n_samples": 5})["n_samples"] == 5
        with pytest.raises(ConfigError, match="integer"):
            EXPERIMENTS["localization"].resolve_options({"n_samples": 5.5})

    def test_optional_numbers(self):
        assert EXPERIMENTS["stationary"].resolve_options({"duration_taus": 3})["duration_taus"] == 3.0
        with pytest.raises(ConfigError, match="number"):
            EXPERIMENTS["stationary"].resolve_options({"duration_taus": "long"})


class TestChecks:
    def test_close_check_absolute_and_relative(self):
        assert close_check("a", "x = 1", 1.05, 1.0, 0.1).passed
        assert not close_check("a", "x = 1", 1.2, 1.0, 0.1).passed
        rel = close_check("b", "x = 100", 104.0, 100.0, 0.05, relative=True)
        assert rel.passed and rel.tolerance == {"relative": 0.05}
        assert not close_check("c", "x = 1", math.nan, 1.0, 1e9).passed

    def test_bound_check(self):
        assert bound_check("d", "x ≤ 1", 0.5, upper=1.0).passed
        assert not bound_check("d", "x ≥ 1", 0.5, lower=1.0).passed
        missing = bound_check("d", "x ≥ 1", None, lower=1.0)
        assert not missing.passed and missing.detail == "not measured"

    def test_flag_check(self):
        check = flag_check("e", "ok", False, required=False)
        assert check.measured is False and not check.passed
        assert check.as_dict()["required"] is False

    def test_optional_failures_do_not_fail_the_result(self):
        result = ExperimentResult("demo")
        result.add(flag_check("info", "ok", False, required=False))
        assert result.passed and result.failed_checks == []
        result.add(flag_check("hard", "ok", False))
        assert not result.passed
        assert [c.name for c in result.failed_checks] == ["hard"]


def _config(model, options=None, **extra):
    data = {"experiment": "rates", "model": model, **extra}
    if options is not None:
        data["experiment_options"] = options
    return parse_config(data)


class TestRatesExperiment:
    def test_brownian_model(self):
        config = _config(
            {"kind": "qbm", "gamma": 0.1, "kT": 10.0, "potential": {"kind": "harmonic", "omega": 1.0}},
            {"ells": [1.0, 5.0]},
        )
        result = run_experiment(config)
        assert result.passed, [c.as_dict() for c in result.failed_checks]
        assert result.columns == ("ell", "tau", "tau_superposition", "tau_decoherence")
        assert [row[0] for row in result.rows] == [1.0, 5.0]
        names = {c.name for c in result.checks}
        assert {"tau", "tau_thermal", "decoherence_vs_superposition_ell5"} <= names
        assert result.metadata["rates"]["tau_thermal"] == pytest.approx(1.0)

    def test_standard_model_has_no_decoherence_time(self):
        result = run_experiment(_config({"kind": "standard", "a": 1.0}, {"ells": [2.0]}))
        assert result.passed
        assert math.isnan(result.rows[0][3])
        assert "tau_thermal" not in {c.name for c in result.checks}
