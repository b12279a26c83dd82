import json
import logging
from pathlib import Path

from click.testing import CliRunner

from qsdlab.cli import cli


def run_cli(config_path, output_dir, logs_dir, *extra):
    """
    Invokes `qsdlab run` in-process and returns the click Result.
    Drops the handlers the CLI installs on the qsdlab logger afterwards.
    """
    try:
        return CliRunner().invoke(
            cli,
            ["run", str(config_path), "--output-dir", str(output_dir), "--logs-dir", str(logs_dir), *extra],
            catch_exceptions=False,
        )
    finally:
        logger = logging.getLogger("qsdlab")
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)


def read_report(output_dir):
    return json.loads((Path(output_dir) / "report.json").read_text(encoding="utf-8"))


def check(report, name):
    """The named check entry of a report; KeyError if it is absent."""
    for entry in report["checks"]:
        if entry["name"] == name:
            return entry
    raise KeyError(name)
