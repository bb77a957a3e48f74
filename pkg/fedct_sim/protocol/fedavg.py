"""
Standalone FedAvg loop.

Shares only the building blocks (data, model, SGD) with ``FederatedServer``,
so a FedCT run with exchange disabled can be checked against it.
"""

import math
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np

from .server import build_federation
from ..autograd import Tensor, get_tape
from ..data.partition import batches, pooled_test_set
from ..losses.objectives import phase1_loss
from ..metrics.evaluation import accuracy
from ..models.mlp import LocalModel, ModelSnapshot, sgd_step
from ..utils.seeding import derive_seed, make_rng

if TYPE_CHECKING:
    from ..runtime.config import ExperimentConfig


def run_fedavg_reference(config: "ExperimentConfig", master_seed: Optional[int] = None,
                         rounds: Optional[int] = None) -> Tuple[List[ModelSnapshot], List[float]]:
    """
    Plain FedAvg under the same seeds as ``FederatedServer``.

    Args:
        config: Experiment configuration (exchange settings are ignored)
        master_seed: Overrides ``config.run.master_seed``
        rounds: Round count (default ``train.rounds``)

    Returns:
        (global snapshot after each round, global test accuracy after each round)
    """
    seed = config.run.master_seed if master_seed is None else master_seed
    total_rounds = config.train.rounds if rounds is None else rounds
    train_cfg = config.train
    federation = build_federation(config, seed)
    shards = federation.shards
    test_set = pooled_test_set(shards)

    current = federation.initial
    trajectory: List[ModelSnapshot] = []
    accuracies: List[float] = []
    for round_index in range(1, total_rounds + 1):
        ids = [shard.owner for shard in shards]
        count = max(1, math.ceil(train_cfg.client_fraction * len(ids) - 1e-9))
        if count < len(ids):
            chosen = make_rng(seed, round_index, "sample").choice(ids, size=count, replace=False)
            ids = sorted(int(cid) for cid in chosen)

        local_params, sizes = [], []
        for cid in ids:
            shard = shards[cid]
            model = LocalModel.from_snapshot(current)
            client_seed = derive_seed(seed, round_index, cid, "phase1")
            for epoch in range(train_cfg.local_epochs if len(shard.train) else 0):
                for rows in batches(shard, train_cfg.batch_size, derive_seed(client_seed, epoch)):
                    tape = get_tape()
                    tape.clear()
                    _, logits = model.forward(Tensor(shard.train.features[rows]))
                    tape.backward(phase1_loss(logits, shard.train.labels[rows]))
                    sgd_step(model, train_cfg.lr, train_cfg.weight_decay, train_cfg.momentum)
            local_params.append([param.data for param in model.parameters()])
            sizes.append(len(shard.train))

        total = float(sum(sizes))
        averaged = [np.zeros_like(array) for array in local_params[0]]
        for params, size in zip(local_params, sizes):
            averaged = [acc + (size / total) * array for acc, array in zip(averaged, params)]
        current = ModelSnapshot.from_arrays(current.config, averaged, None, round_index)
        trajectory.append(current)
        accuracies.append(accuracy(current, test_set))
    return trajectory, accuracies
