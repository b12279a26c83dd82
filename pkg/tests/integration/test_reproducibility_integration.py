"""
Integration test: identical configs give byte-identical artifacts, whatever
the worker count.
"""

import pytest

from .test_stationary_integration import CONFIG
from .utils import read_report, run_cli


@pytest.mark.slow
def test_series_is_byte_identical_across_thread_counts(tmp_path):
    config = tmp_path / "stationary.toml"
    config.write_text(CONFIG)

    first = run_cli(config, tmp_path / "one", tmp_path / "logs", "--threads", "1")
    second = run_cli(config, tmp_path / "two", tmp_path / "logs", "--threads", "2")

    assert first.exit_code == second.exit_code == 0
    assert (tmp_path / "one" / "series.csv").read_bytes() == (tmp_path / "two" / "series.csv").read_bytes()
    assert read_report(tmp_path / "one")["checks"] == read_report(tmp_path / "two")["checks"]


@pytest.mark.slow
def test_seed_override_changes_the_series(tmp_path):
    config = tmp_path / "stationary.toml"
    config.write_text(CONFIG)

    run_cli(config, tmp_path / "a", tmp_path / "logs")
    run_cli(config, tmp_path / "b", tmp_path / "logs", "--seed-override", "1000")

    assert (tmp_path / "a" / "series.csv").read_bytes() != (tmp_path / "b" / "series.csv").read_bytes()
    assert read_report(tmp_path / "b")["overrides"]["base_seed"] == 1000
