"""
Runtime module: configuration, experiment sweeps and the command line.
"""

from .config import (
    ExperimentConfig,
    DataSection,
    PartitionSection,
    ModelSection,
    TrainSection,
    FedctSection,
    RunSection,
    parse_config,
    validate_config,
    apply_overrides,
    with_updates,
)
from .experiment import (
    SeedResult,
    RunSummary,
    AblationRow,
    AblationTable,
    run_single,
    run_experiment,
    run_ablation,
    axis_updates,
    module_updates,
)
from .grad_suite import GradCheckCase, GradCheckReport, run_grad_suite

__all__ = [
    "ExperimentConfig",
    "DataSection",
    "PartitionSection",
    "ModelSection",
    "TrainSection",
    "FedctSection",
    "RunSection",
    "parse_config",
    "validate_config",
    "apply_overrides",
    "with_updates",
    "SeedResult",
    "RunSummary",
    "AblationRow",
    "AblationTable",
    "run_single",
    "run_experiment",
    "run_ablation",
    "axis_updates",
    "module_updates",
    "GradCheckCase",
    "GradCheckReport",
    "run_grad_suite",
]
