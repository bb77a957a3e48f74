"""
Server side of the protocol: aggregation, global prototypes and the round loop.

A round runs local training, prototype upload, ``exchange_iterations`` rounds
of consistency-aware broadcasting and cross-training, then weighted
aggregation and evaluation on the pooled test set.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from .broadcast import BroadcastPlan, BroadcastStrategy, build_broadcast_plan, build_consistency_matrix
from .client import (
    ClientState,
    ReceivedBundle,
    TrainingReport,
    extract_prototypes,
    run_phase1_local_training,
    run_phase3_cross_training,
)
from ..data.partition import PartitionSpec, Shard, dirichlet_partition, pooled_test_set
from ..data.synthetic import Dataset, make_synthetic
from ..losses.prototypes import SERVER, PrototypeFlavor, PrototypeSet
from ..metrics.cka import knowledge_preservation_report
from ..metrics.evaluation import ExchangeRecord, LossTerms, RoundMetrics, accuracy
from ..models.checkpoint import load_checkpoint, save_checkpoint
from ..models.mlp import LocalModel, ModelConfig, ModelSnapshot, init_model
from ..utils.errors import ConfigError, InputError
from ..utils.logger import get_logger
from ..utils.seeding import derive_seed, make_rng

if TYPE_CHECKING:
    from ..runtime.config import ExperimentConfig

logger = get_logger("protocol.server")

THREADS_ENV = "FEDCT_SIM_THREADS"
PROBE_SIZE = 512


@dataclass(frozen=True)
class GlobalModel:
    """Aggregated model after ``round`` rounds."""
    snapshot: ModelSnapshot
    round: int = 0


@dataclass(frozen=True)
class Federation:
    """Everything a run derives from (config, master seed) before round 1."""
    dataset: Dataset
    shards: List[Shard]
    model_config: ModelConfig
    initial: ModelSnapshot


def worker_count() -> int:
    """
    Client worker pool size from ``FEDCT_SIM_THREADS`` (default 1).

    Raises:
        ConfigError: If the variable is not a positive integer
    """
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {value}")
    return value


def build_federation(config: "ExperimentConfig", master_seed: int) -> Federation:
    """
    Generate the dataset, partition it and draw the initial global model.

    Data, partition and initialization seeds derive from ``master_seed``
    unless ``partition.seed`` pins the partition.
    """
    data_cfg = config.data
    dataset = make_synthetic(
        num_classes=data_cfg.num_classes,
        per_class=data_cfg.per_class,
        dim=data_cfg.dim,
        class_separation=data_cfg.separation,
        seed=derive_seed(master_seed, "data"),
    )
    part_cfg = config.partition
    spec = PartitionSpec(
        num_clients=part_cfg.num_clients,
        beta=part_cfg.beta,
        seed=part_cfg.seed if part_cfg.seed is not None else derive_seed(master_seed, "partition"),
        min_samples_per_client=part_cfg.min_samples,
        max_retries=part_cfg.max_retries,
    )
    shards = dirichlet_partition(dataset, spec)
    model_config = config.architecture()
    return Federation(dataset, shards, model_config, init_model(model_config, derive_seed(master_seed, "init")))


def aggregate(snapshots: Sequence[ModelSnapshot], sizes: Sequence[int], round: int = 0) -> GlobalModel:
    """
    Weighted parameter average with weights ``n_i / sum(n)``.

    Contributions are summed in the given order; callers pass clients in
    ascending id order.

    Args:
        snapshots: Participant models
        sizes: Train-set size of each participant
        round: Round index of the result

    Returns:
        GlobalModel with origin None

    Raises:
        InputError: If the inputs are empty, misaligned, have non-positive total
            size or mixed architectures
    """
    if not snapshots:
        raise InputError("aggregate needs at least one snapshot")
    if len(snapshots) != len(sizes):
        raise InputError(f"aggregate: {len(snapshots)} snapshots but {len(sizes)} sizes")
    config = snapshots[0].config
    if any(snapshot.config != config for snapshot in snapshots):
        raise InputError("aggregate: snapshots have different architectures")
    total = float(sum(sizes))
    if total <= 0:
        raise InputError("aggregate: total shard size must be positive")

    summed = [np.zeros_like(array) for array in snapshots[0].arrays()]
    for snapshot, size in zip(snapshots, sizes):
        weight = size / total
        summed = [acc + weight * array for acc, array in zip(summed, snapshot.arrays())]
    return GlobalModel(ModelSnapshot.from_arrays(config, summed, None, round), round)


def aggregate_global_prototypes(local_sets: Sequence[PrototypeSet]) -> PrototypeSet:
    """
    Per-class unweighted mean over the clients that have the class.

    Raises:
        InputError: If no set is given
    """
    if not local_sets:
        raise InputError("aggregate_global_prototypes needs at least one prototype set")
    contributions: Dict[int, List[np.ndarray]] = {}
    for local in local_sets:
        for label in local.classes():
            contributions.setdefault(label, []).append(local[label])
    entries = {label: np.mean(np.stack(vectors), axis=0) for label, vectors in contributions.items()}
    return PrototypeSet(entries, PrototypeFlavor.GLOBAL, SERVER)


class FederatedServer:
    """
    Runs FedCT rounds over a simulated federation.

    All randomness derives from ``master_seed`` through per-(round, client,
    phase) seeds, so results do not depend on the worker count.
    """

    def __init__(self, config: "ExperimentConfig", master_seed: Optional[int] = None,
                 run_dir: Optional[Union[str, Path]] = None):
        """
        Build the federation.

        Args:
            config: Validated experiment configuration
            master_seed: Overrides ``config.run.master_seed``
            run_dir: Directory for checkpoints; checkpoints are skipped when None
        """
        self.config = config
        self.master_seed = config.run.master_seed if master_seed is None else master_seed
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.config_hash = config.config_hash()

        federation = build_federation(config, self.master_seed)
        self.dataset = federation.dataset
        self.shards = federation.shards
        self.model_config = federation.model_config
        self.global_model = GlobalModel(federation.initial, 0)
        self.clients: Dict[int, ClientState] = {
            shard.owner: ClientState(shard.owner, shard, LocalModel.from_snapshot(federation.initial))
            for shard in self.shards
        }
        self.test_set = pooled_test_set(self.shards)
        self.probe_set = self._draw_probe_set()
        self.strategy = BroadcastStrategy(config.fedct.strategy)
        self.history: List[RoundMetrics] = []

        logger.info(
            "Federation ready",
            extra={"context": {
                "clients": len(self.clients),
                "samples": len(self.dataset),
                "test_samples": len(self.test_set),
                "strategy": self.strategy.value,
                "seed": self.master_seed,
                "config_hash": self.config_hash,
            }},
        )

    @property
    def round(self) -> int:
        return self.global_model.round

    def _draw_probe_set(self) -> Dataset:
        size = min(PROBE_SIZE, len(self.test_set))
        rows = make_rng(self.master_seed, "probe").choice(len(self.test_set), size=size, replace=False)
        return self.test_set.subset(np.sort(rows))

    def sample_participants(self, round_index: int) -> List[int]:
        """Draw ``ceil(C * N)`` clients without replacement, ascending ids."""
        ids = sorted(self.clients)
        count = max(1, math.ceil(self.config.train.client_fraction * len(ids) - 1e-9))
        if count >= len(ids):
            return ids
        chosen = make_rng(self.master_seed, round_index, "sample").choice(ids, size=count, replace=False)
        return sorted(int(cid) for cid in chosen)

    def _map_clients(self, fn: Callable[[int], TrainingReport], ids: Sequence[int]) -> List[TrainingReport]:
        workers = worker_count()
        if workers == 1 or len(ids) == 1:
            return [fn(cid) for cid in ids]
        with ThreadPoolExecutor(max_workers=min(workers, len(ids))) as pool:
            return list(pool.map(fn, ids))

    def _phase1(self, round_index: int, participants: Sequence[int]) -> List[TrainingReport]:
        train = self.config.train

        def work(cid: int) -> TrainingReport:
            return run_phase1_local_training(
                self.clients[cid],
                epochs=train.local_epochs,
                lr=train.lr,
                wd=train.weight_decay,
                batch_size=train.batch_size,
                seed=derive_seed(self.master_seed, round_index, cid, "phase1"),
                momentum=train.momentum,
            )

        return self._map_clients(work, participants)

    def _phase3(self, round_index: int, iteration: int, participants: Sequence[int]) -> List[TrainingReport]:
        train = self.config.train
        fedct = self.config.fedct
        weights = self.config.loss_weights()

        def work(cid: int) -> TrainingReport:
            return run_phase3_cross_training(
                self.clients[cid],
                epochs=train.cross_epochs,
                weights=weights,
                lr=train.lr,
                wd=train.weight_decay,
                batch_size=train.batch_size,
                seed=derive_seed(self.master_seed, round_index, cid, "phase3", iteration),
                momentum=train.momentum,
                mfa_partner=fedct.mfa_partner,
            )

        return self._map_clients(work, participants)

    def _upload_prototypes(self, participants: Sequence[int]):
        local_sets = {cid: extract_prototypes(self.clients[cid]) for cid in participants}
        return local_sets, aggregate_global_prototypes([local_sets[cid] for cid in participants])

    def _broadcast(self, plan: BroadcastPlan, local_sets: Dict[int, PrototypeSet],
                   global_prototypes: PrototypeSet, round_index: int) -> None:
        outgoing = {
            src: self.clients[src].model.snapshot(self.clients[src].held_origin, round_index)
            for src in plan.assignment
        }
        for src, dst in sorted(plan.assignment.items()):
            self.clients[dst].received = ReceivedBundle(
                snapshot=outgoing[src],
                local_prototypes=local_sets[src],
                global_prototypes=global_prototypes,
                source=src,
            )

    def _exchange(self, round_index: int, participants: List[int], local_sets: Dict[int, PrototypeSet],
                  global_prototypes: PrototypeSet):
        fedct = self.config.fedct
        needs_matrix = self.strategy in (
            BroadcastStrategy.CONSISTENCY,
            BroadcastStrategy.INCONSISTENCY,
            BroadcastStrategy.OPTIMAL,
        )
        matrix = None
        plans: List[str] = []
        reports: List[TrainingReport] = []
        exchanges: List[ExchangeRecord] = []
        for iteration in range(fedct.exchange_iterations):
            if iteration > 0 and fedct.refresh_prototypes_per_exchange:
                local_sets, global_prototypes = self._upload_prototypes(participants)
                matrix = None
            if needs_matrix and matrix is None:
                classifiers = {cid: self.clients[cid].model.classifier for cid in participants}
                matrix = build_consistency_matrix(classifiers, local_sets)

            plan = build_broadcast_plan(
                matrix,
                self.strategy,
                seed=derive_seed(self.master_seed, round_index, "broadcast", iteration),
                client_ids=participants,
            )
            plans.append(plan.encode())
            logger.info(
                "Broadcast plan",
                extra={"context": {
                    "round": round_index,
                    "iteration": iteration,
                    "strategy": self.strategy.value,
                    "plan": plan.encode(),
                    "cost": plan.cost() if matrix is not None else None,
                }},
            )

            self._broadcast(plan, local_sets, global_prototypes, round_index)
            iteration_reports = self._phase3(round_index, iteration, participants)
            reports.extend(iteration_reports)
            exchanges.extend(
                ExchangeRecord(
                    iteration=iteration,
                    source=report.source,
                    target=report.client_id,
                    origin=report.origin,
                    pre_accuracy=report.pre_accuracy,
                    post_accuracy=report.post_accuracy,
                )
                for report in iteration_reports
            )
        return reports, exchanges, "|".join(plans)

    def _client_accuracy(self, cid: int) -> float:
        client = self.clients[cid]
        split = client.shard.test if len(client.shard.test) else client.shard.train
        return accuracy(client.model.snapshot(), split)

    def run_round(self) -> RoundMetrics:
        """
        Run one full round and advance the global model.

        Returns:
            RoundMetrics of the round
        """
        started = time.perf_counter()
        round_index = self.round + 1
        participants = self.sample_participants(round_index)
        global_snapshot = self.global_model.snapshot

        for cid in participants:
            client = self.clients[cid]
            client.model = LocalModel.from_snapshot(global_snapshot)
            client.received = None
            client.held_origin = cid

        phase1_reports = self._phase1(round_index, participants)
        local_sets, global_prototypes = self._upload_prototypes(participants)
        phase1_models = {cid: self.clients[cid].model.snapshot(cid, round_index) for cid in participants}

        phase3_reports: List[TrainingReport] = []
        exchanges: List[ExchangeRecord] = []
        plan_encoding = ""
        if self.strategy != BroadcastStrategy.NONE:
            phase3_reports, exchanges, plan_encoding = self._exchange(
                round_index, participants, local_sets, global_prototypes
            )

        knowledge = None
        every = self.config.run.knowledge_report_every
        if every and round_index % every == 0 and phase3_reports:
            held = {self.clients[cid].held_origin: self.clients[cid].model.snapshot() for cid in participants}
            knowledge = knowledge_preservation_report(
                phase1_models, held, self.clients_shards(), self.probe_set, round=round_index
            )

        per_client = [self._client_accuracy(cid) for cid in participants]
        aggregated = aggregate(
            [self.clients[cid].model.snapshot() for cid in participants],
            [len(self.clients[cid].shard.train) for cid in participants],
            round=round_index,
        )
        self.global_model = aggregated
        global_accuracy = accuracy(aggregated.snapshot, self.test_set)

        if phase3_reports:
            loss_terms = LossTerms(
                l_cls=float(np.mean([r.l_cls for r in phase3_reports])),
                l_apcl=float(np.mean([r.l_apcl for r in phase3_reports])),
                l_mix=float(np.mean([r.l_mix for r in phase3_reports])),
            )
        else:
            loss_terms = LossTerms(l_cls=float(np.mean([r.l_cls for r in phase1_reports])))

        metrics = RoundMetrics(
            round=round_index,
            global_test_accuracy=global_accuracy,
            client_ids=list(participants),
            per_client_accuracy=per_client,
            loss_terms=loss_terms,
            strategy=self.strategy.value,
            seed=self.master_seed,
            broadcast_plan=plan_encoding,
            apcl_skip_count=int(sum(r.apcl_skipped for r in phase3_reports)),
            exchanges=exchanges,
            knowledge=knowledge,
            wall_time=time.perf_counter() - started if self.config.run.record_wall_time else None,
        )
        self.history.append(metrics)

        checkpoint_every = self.config.run.checkpoint_every
        if self.run_dir is not None and checkpoint_every and round_index % checkpoint_every == 0:
            self.save_checkpoint()

        logger.info(
            "Round finished",
            extra={"context": {
                "round": round_index,
                "global_acc": round(global_accuracy, 6),
                "mean_client_acc": round(metrics.mean_client_accuracy, 6),
                "plan": plan_encoding,
                "apcl_skip_count": metrics.apcl_skip_count,
            }},
        )
        return metrics

    def run(self, rounds: Optional[int] = None, on_round: Optional[Callable[[RoundMetrics], None]] = None,
            show_progress: Optional[bool] = None) -> List[RoundMetrics]:
        """
        Run rounds until ``rounds`` (default ``train.rounds``) have completed in total.

        Args:
            rounds: Total round count to reach
            on_round: Called with each round's metrics
            show_progress: Show a progress bar (default ``run.show_progress``)

        Returns:
            Metrics of the rounds run by this call
        """
        target = self.config.train.rounds if rounds is None else rounds
        progress = self.config.run.show_progress if show_progress is None else show_progress
        produced: List[RoundMetrics] = []
        bar = tqdm(
            total=max(0, target - self.round),
            disable=not progress,
            desc=f"seed {self.master_seed}",
            leave=False,
        )
        with bar:
            while self.round < target:
                metrics = self.run_round()
                produced.append(metrics)
                if on_round is not None:
                    on_round(metrics)
                bar.set_postfix(acc=f"{metrics.global_test_accuracy:.3f}")
                bar.update(1)
        return produced

    def clients_shards(self) -> Dict[int, Shard]:
        return {cid: client.shard for cid, client in self.clients.items()}

    def checkpoint_path(self, round_index: int) -> Path:
        if self.run_dir is None:
            raise InputError("This server has no run directory for checkpoints")
        return self.run_dir / "checkpoints" / f"round_{round_index:04d}.json"

    def save_checkpoint(self) -> Path:
        """Write the current global model; returns the file path."""
        path = save_checkpoint(
            self.global_model.snapshot, self.checkpoint_path(self.round), self.config_hash, self.master_seed
        )
        logger.info("Checkpoint written", extra={"context": {"round": self.round, "path": str(path)}})
        return path

    def load_checkpoint(self, path: Union[str, Path]) -> None:
        """
        Resume from a checkpoint written by a run with the same config and master seed.

        Raises:
            InputError: If the checkpoint was written under another config or seed
        """
        snapshot, config_hash, master_seed = load_checkpoint(path)
        if config_hash != self.config_hash:
            raise InputError(
                f"Checkpoint {path} belongs to config {config_hash}, this run is {self.config_hash}"
            )
        if master_seed != self.master_seed:
            raise InputError(
                f"Checkpoint {path} was written with master seed {master_seed}, this run uses {self.master_seed}"
            )
        if snapshot.config != self.model_config:
            raise InputError(f"Checkpoint {path} architecture does not match this run")
        self.global_model = GlobalModel(snapshot.relabel(None, snapshot.round), snapshot.round)
        logger.info("Resumed from checkpoint", extra={"context": {"round": snapshot.round, "path": str(path)}})
