"""
Utilities module for the simulator.

This module provides the error hierarchy, logging helpers and seed derivation
shared across subpackages.
"""

from .errors import (
    SimulatorError,
    DimensionError,
    InputError,
    PartitionError,
    ConsistencyMatrixError,
    ContractError,
    NumericalError,
    TrainingDivergedError,
    ConfigError,
)
from .logger import get_logger, configure_logging, JsonLinesFormatter
from .seeding import derive_seed, make_rng

__all__ = [
    "SimulatorError",
    "DimensionError",
    "InputError",
    "PartitionError",
    "ConsistencyMatrixError",
    "ContractError",
    "NumericalError",
    "TrainingDivergedError",
    "ConfigError",
    "get_logger",
    "configure_logging",
    "JsonLinesFormatter",
    "derive_seed",
    "make_rng",
]
