"""
Exception hierarchy for the simulator.

Every error raised by library code derives from SimulatorError so the CLI can
report it uniformly; the second base class keeps the builtin meaning.
"""

from typing import Any, Optional


class SimulatorError(Exception):
    """Base class for all simulator errors."""


class InputError(SimulatorError, ValueError):
    """An input violates a documented precondition."""


class DimensionError(InputError):
    """Operand shapes do not agree."""


class PartitionError(InputError):
    """The Dirichlet partition could not satisfy its constraints."""


class ConsistencyMatrixError(InputError):
    """The consistency matrix cannot be built for some client."""

    def __init__(self, message: str, client_id: Optional[int] = None):
        super().__init__(message)
        self.client_id = client_id


class ContractError(SimulatorError, RuntimeError):
    """An API was called out of order or with a missing prerequisite."""


class NumericalError(SimulatorError, ArithmeticError):
    """An operation produced NaN or Inf."""


class TrainingDivergedError(NumericalError):
    """A training loss became non-finite."""

    def __init__(self, client_id: int, phase: str, step: int, value: Any = None):
        super().__init__(
            f"Client {client_id} diverged in {phase} at step {step} (loss={value})"
        )
        self.client_id = client_id
        self.phase = phase
        self.step = step


class ConfigError(SimulatorError, ValueError):
    """A configuration value is unknown, mistyped or out of range."""

    def __init__(self, key_path: str, message: str):
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path
