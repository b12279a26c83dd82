"""Tests for the logging namespace and defaults."""

from __future__ import annotations

import logging

from qsdlab.utils.logging import get_logger, setup_logging


def test_logging_namespace_and_defaults(tmp_path, caplog) -> None:
    """`get_logger` should use the qsdlab namespace and defaults."""

    caplog.set_level(logging.INFO)

    logger = setup_logging(logs_dir=tmp_path)

    assert logger.name == "qsdlab"

    child_logger = get_logger("example")
    child_logger.info("namespace check")

    assert child_logger.name == "qsdlab.example"

    assert (tmp_path / "qsdlab.log").exists()

    # Close handlers created during setup to avoid interfering with other tests
    base_logger = logging.getLogger("qsdlab")
    for handler in list(base_logger.handlers):
        handler.close()
        base_logger.removeHandler(handler)


def test_module_loggers_live_under_namespace() -> None:
    from qsdlab import ensemble, fokker_planck, master, qsd, workers

    for module, name in (
        (ensemble, "ensemble"),
        (fokker_planck, "fokker_planck"),
        (master, "master"),
        (qsd, "qsd"),
        (workers, "workers"),
    ):
        assert module.logger.name == f"qsdlab.{name}"
