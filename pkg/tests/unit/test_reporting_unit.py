"""CSV/JSON artifact writers."""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from rich.console import Console

from qsdlab.config import parse_config
from qsdlab.experiments import ExperimentResult, close_check, flag_check
from qsdlab.fokker_planck import PhaseSpaceField, PhaseSpaceLattice
from qsdlab.reporting import (
    SCHEMA_VERSION,
    build_report,
    checks_table,
    format_value,
    to_jsonable,
    write_field,
    write_outputs,
    write_series,
)


@pytest.fixture
def config(tmp_path):
    data = {"experiment": "rates", "model": {"kind": "standard", "a": 1.0}}
    return parse_config(data).with_overrides(output_dir=tmp_path / "out", seed=3)


def test_format_value():
    assert format_value(0.1) == "1.0000000000000001e-01"
    assert format_value(3) == "3.0000000000000000e+00"
    assert format_value(math.nan) == "nan"
    assert format_value(-math.inf) == "-inf"


def test_series_has_schema_header(tmp_path):
    path = write_series(tmp_path / "s.csv", ("t", "x"), [(0.0, 1.5), (0.5, math.inf)])
    lines = path.read_text().splitlines()
    assert lines[0] == f"# schema={SCHEMA_VERSION}"
    assert lines[1] == "t,x"
    assert lines[3] == "5.0000000000000000e-01,inf"


def test_series_row_width_is_checked(tmp_path):
    with pytest.raises(ValueError, match="columns"):
        write_series(tmp_path / "s.csv", ("t", "x"), [(0.0,)])


def test_field_rows_are_q_major(tmp_path):
    lattice = PhaseSpaceLattice(0.0, 3.0, 3, 0.0, 4.0, 4)
    values = np.arange(12, dtype=float).reshape(3, 4)
    lines = write_field(tmp_path / "f.csv", PhaseSpaceField(lattice, values)).read_text().splitlines()
    assert lines[1] == "q,p,value"
    assert len(lines) == 2 + 12
    q, p, v = (float(s) for s in lines[3].split(","))
    assert (q, p, v) == (0.5, 1.5, 1.0)


def test_to_jsonable():
    out = to_jsonable(
        {
            "z": 1 + 2j,
            "arr": np.array([1.0, np.nan]),
            "n": np.int64(4),
            "flag": np.bool_(True),
            "path": Path("a/b"),
            "inf": math.inf,
            3: None,
        }
    )
    assert out == {"z": [1.0, 2.0], "arr": [1.0, None], "n": 4, "flag": True, "path": "a/b", "inf": None, "3": None}
    json.dumps(out, allow_nan=False)


def test_report_and_outputs(config):
    result = ExperimentResult("rates", columns=("ell", "tau"), rows=[(1.0, 0.7)], metadata={"beta": 0.5 + 0.5j})
    result.add(close_check("tau", "τ", 0.7, 0.7, 1e-12))
    result.add(flag_check("optional", "ok", False, required=False))
    report = build_report(result, config)
    assert report["schema"] == SCHEMA_VERSION
    assert report["passed"] is True
    assert report["overrides"]["base_seed"] == 3
    assert report["metadata"]["beta"] == [0.5, 0.5]

    written = write_outputs(result, config)
    assert set(written) == {"series", "report"}
    on_disk = json.loads(written["report"].read_text())
    assert on_disk["checks"][1]["required"] is False
    assert on_disk["config"]["model"]["a"] == 1.0


def test_checks_table_renders():
    result = ExperimentResult("demo")
    result.add(close_check("good", "x = 1", 1.0, 1.0, 0.1))
    result.add(flag_check("bad", "ok", False))
    console = Console(record=True, width=200)
    console.print(checks_table(result))
    text = console.export_text()
    assert "demo: FAILED" in text
    assert "good" in text and "FAIL" in text
