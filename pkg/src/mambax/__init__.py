"""MambaX: nonlinear state predictive control for spectral image super-resolution,
implemented on a small float64 reverse-mode tensor engine."""

from .config import ExperimentConfig, load_config
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    DomainError,
    InternalError,
    MambaXError,
    NumericError,
)
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DomainError",
    "ExperimentConfig",
    "InternalError",
    "MambaXError",
    "NumericError",
    "Tensor",
    "backward",
    "load_config",
    "no_grad",
]
