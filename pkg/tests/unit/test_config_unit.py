"""
Unit tests for strict TOML configuration parsing.
"""

from pathlib import Path

import pytest

from qsdlab.config import load_config, parse_config
from qsdlab.errors import ConfigError
from qsdlab.model import Harmonic


def _base(**extra):
    data = {
        "experiment": "rates",
        "model": {"kind": "qbm", "gamma": 0.1, "kT": 10.0, "potential": {"kind": "harmonic", "omega": 1.0}},
    }
    data.update(extra)
    return data


def test_minimal_config_uses_defaults():
    config = parse_config(_base())
    assert config.experiment == "rates"
    assert config.grid.n_points == 128
    assert config.integration.n_traj == 200
    assert config.options == {"ells": (1.0, 2.0, 5.0, 10.0, 20.0)}
    assert config.output_dir == Path("qsdlab-out/rates")
    model = config.build_model()
    assert model.qbm.gamma == 0.1
    assert isinstance(model.potential, Harmonic)


def test_grid_and_integration_tables():
    config = parse_config(
        _base(
            grid={"n_points": 64, "x_min": -10, "x_max": 10},
            integration={"t": 2.5, "dt": 1e-3, "n_traj": 10, "base_seed": 7, "record_every": 5},
        )
    )
    grid = config.build_grid()
    assert grid.n_points == 64
    assert config.integration.dt == 1e-3
    assert config.integration.base_seed == 7


@pytest.mark.parametrize(
    "data, field_path",
    [
        (_base(extra_table={}), "extra_table"),
        (_base(model={"kind": "standard", "a": 1.0, "gamma": 0.1}), "model.gamma"),
        (_base(model={"kind": "standard"}), "model.a"),
        (_base(model={"kind": "standard", "a": 1.0, "m": -1.0}), "model.m"),
        (_base(model={"kind": "standard", "a": True}), "model.a"),
        (_base(model={"kind": "lattice", "a": 1.0}), "model.kind"),
        (_base(model={"kind": "standard", "a": 1.0, "potential": {"kind": "morse"}}), "model.potential.kind"),
        (
            _base(model={"kind": "standard", "a": 1.0, "potential": {"kind": "harmonic", "lam": 1.0}}),
            "model.potential.lam",
        ),
        (_base(grid={"n_points": 64.0}), "grid.n_points"),
        (_base(integration={"n_traj": 0}), "integration.n_traj"),
        (_base(integration={"dt": 0}), "integration.dt"),
        (_base(experiment_options={"ell": 1.0}), "experiment_options.ell"),
        (_base(experiment_options={"ells": [1.0, "two"]}), "experiment_options.ells"),
        (_base(output={"dir": "x"}), "output.dir"),
        ({"model": {"kind": "standard", "a": 1.0}}, "experiment"),
        (_base(experiment="teleport"), "experiment"),
    ],
)
def test_invalid_fields_are_named(data, field_path):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(data)
    assert excinfo.value.field_path == field_path
    assert str(excinfo.value).startswith(field_path)


def test_missing_model_table():
    with pytest.raises(ConfigError, match="missing required table"):
        parse_config({"experiment": "rates"})


def test_model_errors_surface_as_config_errors():
    config = parse_config(_base(model={"kind": "standard", "a": 0.0, "b": 0.0, "m": 2.0, "hbar": 1.0}))
    assert config.model.m == 2.0
    bad = parse_config(
        _base(model={"kind": "standard", "a": 1.0, "potential": {"kind": "tabulated", "nodes": [0, 1], "values": [0, 1]}})
    )
    with pytest.raises(ConfigError) as excinfo:
        bad.build_model()
    assert excinfo.value.field_path == "model"


def test_bad_grid_surfaces_as_config_error():
    config = parse_config(_base(grid={"n_points": 100}))
    with pytest.raises(ConfigError) as excinfo:
        config.build_grid()
    assert excinfo.value.field_path == "grid"


class TestOverrides:
    def test_overrides_replace_fields(self, tmp_path):
        config = parse_config(_base()).with_overrides(output_dir=tmp_path, seed=99, threads=3)
        assert config.output_dir == tmp_path
        assert config.integration.base_seed == 99
        assert config.threads == 3

    def test_none_leaves_config_alone(self):
        config = parse_config(_base())
        assert config.with_overrides() == config

    def test_threads_must_be_positive(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(_base()).with_overrides(threads=0)
        assert excinfo.value.field_path == "threads"


class TestLoadConfig:
    def test_reads_toml(self, tmp_path):
        path = tmp_path / "rates.toml"
        path.write_text(
            'experiment = "rates"\n'
            "[model]\n"
            'kind = "standard"\n'
            "a = 1.0\n"
            "b = 0.25\n"
            "[experiment_options]\n"
            "ells = [1.0, 3.0]\n"
        )
        config = load_config(path)
        assert config.model.b == 0.25
        assert config.options["ells"] == (1.0, 3.0)
        assert config.raw["model"]["a"] == 1.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("experiment = \n")
        with pytest.raises(ConfigError, match="invalid TOML"):
            load_config(path)


@pytest.mark.parametrize(
    "path", sorted((Path(__file__).resolve().parents[2] / "configs").glob("*.toml")), ids=lambda p: p.stem
)
def test_shipped_configs_parse(path):
    config = load_config(path)
    config.build_model()
    config.build_grid()
