"""Main module for fmpinn package."""
from .config import ExperimentConfig, load_config
from .exceptions import (
    CheckFailed,
    ConfigurationError,
    ConversionError,
    NumericError,
    SolverError,
    TrainingAborted,
    ValidationError,
)
from .fdm import GridField, fdm_solve, interpolate
from .loss import GammaSchedule, fmpinn_total_loss, mpinn_total_loss
from .network import MscaleNetwork, NetworkConfig, Parameters
from .problems import ProblemDefinition, get_problem, problem_names
from .trainer import TrainConfig, evaluate, train

__all__ = [
    "CheckFailed",
    "ConfigurationError",
    "ConversionError",
    "ExperimentConfig",
    "GammaSchedule",
    "GridField",
    "MscaleNetwork",
    "NetworkConfig",
    "NumericError",
    "Parameters",
    "ProblemDefinition",
    "SolverError",
    "TrainConfig",
    "TrainingAborted",
    "ValidationError",
    "evaluate",
    "fdm_solve",
    "fmpinn_total_loss",
    "get_problem",
    "interpolate",
    "load_config",
    "mpinn_total_loss",
    "problem_names",
    "train",
]
