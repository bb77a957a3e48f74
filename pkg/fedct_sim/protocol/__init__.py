"""
Protocol module: the four-phase FedCT round.

Clients train locally, upload prototypes, exchange models according to a
consistency-aware broadcast plan, cross-train and are aggregated by the server.
"""

from .broadcast import (
    BroadcastStrategy,
    BroadcastPlan,
    ConsistencyMatrix,
    build_consistency_matrix,
    build_broadcast_plan,
    random_derangement,
    optimal_derangement_cost,
)
from .client import (
    ClientState,
    ReceivedBundle,
    TrainingReport,
    run_phase1_local_training,
    extract_prototypes,
    run_phase3_cross_training,
)
from .server import (
    GlobalModel,
    Federation,
    FederatedServer,
    aggregate,
    aggregate_global_prototypes,
    build_federation,
    worker_count,
)
from .fedavg import run_fedavg_reference

__all__ = [
    "BroadcastStrategy",
    "BroadcastPlan",
    "ConsistencyMatrix",
    "build_consistency_matrix",
    "build_broadcast_plan",
    "random_derangement",
    "optimal_derangement_cost",
    "ClientState",
    "ReceivedBundle",
    "TrainingReport",
    "run_phase1_local_training",
    "extract_prototypes",
    "run_phase3_cross_training",
    "GlobalModel",
    "Federation",
    "FederatedServer",
    "aggregate",
    "aggregate_global_prototypes",
    "build_federation",
    "worker_count",
    "run_fedavg_reference",
]
