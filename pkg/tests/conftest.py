import sys
import warnings
from pathlib import Path

import pytest

# Ensure src directory is importable without installation
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qsdlab.gaussian import solve_beta  # noqa: E402
from qsdlab.hilbert import Grid  # noqa: E402
from qsdlab.model import Harmonic, QBMParams, from_qbm, standard  # noqa: E402
from qsdlab.utils.logging import setup_logging  # noqa: E402


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers",
        "slow: runs full trajectory ensembles or master-equation integrations",
    )


@pytest.fixture(scope="session", autouse=True)
def _configure_test_logging(tmp_path_factory):
    """Configure logging to a temp directory for tests."""
    logs_dir = tmp_path_factory.mktemp("logs")
    logger = setup_logging(log_level="DEBUG", logs_dir=logs_dir, console=False)
    yield
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


@pytest.fixture
def free_model():
    """Free particle with position measurement only (a=1, b=0, m=ħ=1)."""
    return standard(1.0, 0.0)


@pytest.fixture
def free_params(free_model):
    return solve_beta(free_model)


@pytest.fixture
def grid():
    return Grid(128, -20.0, 20.0)


@pytest.fixture
def small_grid():
    """Coarse grid for dense density-matrix work (N <= 64)."""
    return Grid(32, -8.0, 8.0)


@pytest.fixture
def qbm_model():
    """Damped harmonic oscillator: γ=0.5, kT=2, ω=1."""
    return from_qbm(QBMParams(gamma=0.5, kT=2.0), Harmonic(1.0, 1.0))


@pytest.fixture
def quiet_warnings():
    """Silence scope and wrap warnings for tests that do not assert on them."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
