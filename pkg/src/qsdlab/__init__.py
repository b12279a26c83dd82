"""
qsdlab - quantum state diffusion trajectories, master equations and their
phase-space limits for one-dimensional open quantum systems.
"""

from .errors import (
    ConfigError,
    ModelError,
    NormCollapse,
    NumericalError,
    QsdLabError,
    StabilityViolation,
    TrajectoryFailure,
)
from .gaussian import StationaryParams, coherent_state, solve_beta, superposition
from .hilbert import Grid, WaveFunction, measure_moments
from .master import DensityMatrix, evolve, pure_density
from .model import LindbladModel, Potential, QBMParams, from_qbm, standard
from .qsd import NoiseProcess, TrajectoryRecord, ito_step, run_trajectory

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ModelError",
    "NormCollapse",
    "NumericalError",
    "QsdLabError",
    "StabilityViolation",
    "TrajectoryFailure",
    "StationaryParams",
    "coherent_state",
    "solve_beta",
    "superposition",
    "Grid",
    "WaveFunction",
    "measure_moments",
    "DensityMatrix",
    "evolve",
    "pure_density",
    "LindbladModel",
    "Potential",
    "QBMParams",
    "from_qbm",
    "standard",
    "NoiseProcess",
    "TrajectoryRecord",
    "ito_step",
    "run_trajectory",
]
