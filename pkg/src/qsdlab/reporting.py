"""
Artifact writers for experiment results.

All files are written from the calling process after the reduction, so a
config run twice gives byte-identical ``series.csv`` and ``field_*.csv``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Sequence

import numpy as np
from rich.table import Table

from .config import ExperimentConfig
from .experiments import ExperimentResult
from .fokker_planck import PhaseSpaceField
from .utils.logging import get_logger

logger = get_logger("reporting")

__all__ = [
    "SCHEMA_VERSION",
    "format_value",
    "write_series",
    "write_field",
    "to_jsonable",
    "build_report",
    "write_outputs",
    "checks_table",
]

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.16e"


def format_value(value: Any) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return FLOAT_FORMAT % value


def _write_table(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema={SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} values for {len(columns)} columns")
            writer.writerow([format_value(v) for v in row])


def write_series(path: Path | str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    _write_table(path, columns, rows)
    return path


def write_field(path: Path | str, f: PhaseSpaceField) -> Path:
    """One row per lattice cell center, q outer and p inner."""
    path = Path(path)
    lattice = f.lattice
    q, p = lattice.mesh()
    rows = zip(q.ravel(), p.ravel(), np.asarray(f.values).ravel())
    _write_table(path, ("q", "p", "value"), rows)
    return path


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; complex numbers become [re, im], non-finite floats null."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def build_report(result: ExperimentResult, config: ExperimentConfig) -> Dict[str, Any]:
    return to_jsonable(
        {
            "schema": SCHEMA_VERSION,
            "experiment": result.experiment,
            "passed": result.passed,
            "config": config.raw,
            "overrides": {
                "base_seed": config.integration.base_seed,
                "threads": config.threads,
                "output_dir": config.output_dir,
            },
            "checks": [c.as_dict() for c in result.checks],
            "metadata": result.metadata,
        }
    )


def write_outputs(result: ExperimentResult, config: ExperimentConfig) -> Dict[str, Path]:
    """series.csv, field_<name>.csv for every field, and report.json."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}
    if result.columns:
        written["series"] = write_series(out_dir / "series.csv", result.columns, result.rows)
    for name in sorted(result.fields):
        written[f"field_{name}"] = write_field(out_dir / f"field_{name}.csv", result.fields[name])
    report_path = out_dir / "report.json"
    with report_path.open("w", encoding="utf-8") as fh:
        json.dump(build_report(result, config), fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")
    written["report"] = report_path
    logger.info(f"Wrote {len(written)} artifacts to {out_dir}")
    return written


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join("-" if v is None else _cell(v) for v in value) + "]"
    if isinstance(value, dict):
        return ", ".join(f"{k}={_cell(v)}" for k, v in value.items())
    return "-" if value is None else str(value)


def checks_table(result: ExperimentResult) -> Table:
    table = Table(title=f"{result.experiment}: {'PASSED' if result.passed else 'FAILED'}")
    table.add_column("check")
    table.add_column("relation")
    table.add_column("measured", justify="right")
    table.add_column("expected", justify="right")
    table.add_column("tolerance", justify="right")
    table.add_column("result")
    for c in result.checks:
        if c.passed:
            verdict = "[green]pass[/green]"
        elif c.required:
            verdict = "[red]FAIL[/red]"
        else:
            verdict = "[yellow]info[/yellow]"
        table.add_row(c.name, c.equation, _cell(c.measured), _cell(c.expected), _cell(c.tolerance), verdict)
    return table
