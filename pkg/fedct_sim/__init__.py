"""
FedCT Sim - a deterministic simulator for federated cross-training with
consistency-aware knowledge broadcasting and multi-view prototype guidance.
"""

__version__ = "0.1.0"

from fedct_sim.protocol import FederatedServer, run_fedavg_reference
from fedct_sim.runtime import ExperimentConfig, parse_config, run_experiment, run_ablation

__all__ = [
    "FederatedServer",
    "run_fedavg_reference",
    "ExperimentConfig",
    "parse_config",
    "run_experiment",
    "run_ablation",
]
