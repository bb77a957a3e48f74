"""
Client-side phases of a round: local training, prototype extraction and
multi-view cross-training of a received model.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..autograd import Tensor, get_tape, no_grad
from ..data.partition import Shard, batches
from ..losses.objectives import LossWeights, phase1_loss, phase3_loss
from ..losses.prototypes import PrototypeFlavor, PrototypeSet, fuse_prototypes
from ..metrics.evaluation import accuracy
from ..models.mlp import LocalModel, ModelSnapshot, encode, sgd_step
from ..utils.errors import ContractError, InputError, NumericalError, TrainingDivergedError
from ..utils.logger import get_logger
from ..utils.seeding import derive_seed

logger = get_logger("protocol.client")


@dataclass
class ReceivedBundle:
    """What a client receives in a broadcast: a model plus its sender's knowledge."""
    snapshot: ModelSnapshot
    local_prototypes: PrototypeSet
    global_prototypes: PrototypeSet
    source: int


@dataclass
class ClientState:
    """
    A party of the federation.

    ``received`` is only set between a broadcast and the cross-training that
    consumes it. ``held_origin`` is the client whose Phase I model the
    currently held model descends from.
    """
    id: int
    shard: Shard
    model: LocalModel
    last_local_prototypes: Optional[PrototypeSet] = None
    received: Optional[ReceivedBundle] = None
    held_origin: Optional[int] = None


@dataclass
class TrainingReport:
    """Loss trajectory and term means of one client's training phase."""
    client_id: int
    phase: str
    losses: List[float] = field(default_factory=list)
    l_cls: float = 0.0
    l_apcl: float = 0.0
    l_mix: float = 0.0
    apcl_skipped: int = 0
    pre_accuracy: Optional[float] = None
    post_accuracy: Optional[float] = None
    source: Optional[int] = None
    origin: Optional[int] = None

    @property
    def steps(self) -> int:
        return len(self.losses)


def _test_accuracy(snapshot: ModelSnapshot, shard: Shard) -> Optional[float]:
    if len(shard.test) == 0:
        return None
    return accuracy(snapshot, shard.test)


def run_phase1_local_training(client: ClientState, epochs: int, lr: float, wd: float,
                              batch_size: int = 32, seed: int = 0, momentum: float = 0.0) -> TrainingReport:
    """
    Train the client's model on its own train split with plain cross-entropy.

    Args:
        client: Client whose ``model`` starts from the current global model
        epochs: Passes over the train split (0 leaves the parameters unchanged)
        lr: Learning rate
        wd: Weight decay
        batch_size: Rows per batch
        seed: Per-(round, client) seed; epoch shuffles derive from it
        momentum: SGD momentum

    Returns:
        TrainingReport with the per-step loss trajectory

    Raises:
        TrainingDivergedError: If a loss or gradient becomes non-finite
    """
    report = TrainingReport(client_id=client.id, phase="phase1")
    train = client.shard.train
    if len(train) == 0:
        return report

    step = 0
    for epoch in range(epochs):
        for rows in batches(client.shard, batch_size, derive_seed(seed, epoch)):
            tape = get_tape()
            tape.clear()
            try:
                _, logits = client.model.forward(Tensor(train.features[rows]))
                loss = phase1_loss(logits, train.labels[rows])
                tape.backward(loss)
            except NumericalError as exc:
                tape.clear()
                logger.error(
                    "Local training diverged",
                    extra={"context": {"client": client.id, "phase": "phase1", "step": step}},
                )
                raise TrainingDivergedError(client.id, "phase1", step, str(exc)) from exc
            sgd_step(client.model, lr, wd, momentum)
            report.losses.append(loss.item())
            step += 1

    if report.losses:
        report.l_cls = float(np.mean(report.losses))
    logger.debug(
        "Phase I finished",
        extra={"context": {"client": client.id, "steps": report.steps, "losses": report.losses}},
    )
    return report


def extract_prototypes(client: ClientState) -> PrototypeSet:
    """
    Per-class mean encoder feature over the client's train split.

    Classes without train samples are omitted. The result is stored as the
    client's ``last_local_prototypes``.

    Raises:
        InputError: If the train split is empty
    """
    train = client.shard.train
    if len(train) == 0:
        raise InputError(f"Client {client.id} has no training samples to build prototypes from")

    with no_grad():
        features = encode(client.model.encoder, Tensor(train.features)).numpy()

    entries = {}
    for label in np.unique(train.labels):
        entries[int(label)] = features[train.labels == label].mean(axis=0)
    prototypes = PrototypeSet(entries, PrototypeFlavor.LOCAL, client.id)

    missing = sorted(set(range(train.num_classes)) - set(entries))
    if missing:
        logger.debug("Classes without prototype", extra={"context": {"client": client.id, "classes": missing}})
    client.last_local_prototypes = prototypes
    return prototypes


def run_phase3_cross_training(client: ClientState, epochs: int, weights: LossWeights, lr: float = 0.01,
                              wd: float = 1e-5, batch_size: int = 32, seed: int = 0, momentum: float = 0.0,
                              mfa_partner: str = "sample") -> TrainingReport:
    """
    Retrain the received model on this client's data, guided by fused prototypes.

    The fused set blends the sender's local prototypes with the global ones
    (``weights.lambda_fuse``). The trained model replaces ``client.model`` and
    the received bundle is consumed.

    Args:
        client: Client holding a received bundle
        epochs: Passes over the train split
        weights: Loss weights and temperatures
        lr: Learning rate
        wd: Weight decay
        batch_size: Rows per batch
        seed: Per-(round, client, iteration) seed for shuffles and mixup pairing
        momentum: SGD momentum
        mfa_partner: Mixup partner, "sample" or "prototype"

    Returns:
        TrainingReport with term means and accuracies on this client's test
        split before and after training

    Raises:
        ContractError: If nothing was received
        TrainingDivergedError: If a loss or gradient becomes non-finite
    """
    bundle = client.received
    if bundle is None:
        raise ContractError(f"Client {client.id} has no received model to cross-train")

    fused = fuse_prototypes(bundle.local_prototypes, bundle.global_prototypes, weights.lambda_fuse)
    model = LocalModel.from_snapshot(bundle.snapshot)
    train = client.shard.train
    report = TrainingReport(
        client_id=client.id,
        phase="phase3",
        pre_accuracy=_test_accuracy(bundle.snapshot, client.shard),
        source=bundle.source,
        origin=bundle.snapshot.origin_client,
    )

    cls_terms, apcl_terms, mix_terms = [], [], []
    step = 0
    for epoch in range(epochs if len(train) else 0):
        for batch, rows in enumerate(batches(client.shard, batch_size, derive_seed(seed, "epoch", epoch))):
            tape = get_tape()
            tape.clear()
            try:
                out = phase3_loss(
                    Tensor(train.features[rows]),
                    train.labels[rows],
                    model,
                    fused,
                    weights,
                    pairing_seed=derive_seed(seed, "pair", epoch, batch),
                    mfa_partner=mfa_partner,
                )
                tape.backward(out.total)
            except NumericalError as exc:
                tape.clear()
                logger.error(
                    "Cross-training diverged",
                    extra={"context": {"client": client.id, "phase": "phase3", "step": step}},
                )
                raise TrainingDivergedError(client.id, "phase3", step, str(exc)) from exc
            sgd_step(model, lr, wd, momentum)
            report.losses.append(out.total.item())
            cls_terms.append(out.l_cls)
            apcl_terms.append(out.l_apcl)
            mix_terms.append(out.l_mix)
            report.apcl_skipped += out.apcl_skipped
            step += 1

    if report.losses:
        report.l_cls = float(np.mean(cls_terms))
        report.l_apcl = float(np.mean(apcl_terms))
        report.l_mix = float(np.mean(mix_terms))

    client.model = model
    client.held_origin = bundle.snapshot.origin_client
    client.received = None
    report.post_accuracy = _test_accuracy(model.snapshot(), client.shard)
    logger.debug(
        "Phase III finished",
        extra={"context": {
            "client": client.id,
            "source": bundle.source,
            "origin": report.origin,
            "steps": report.steps,
            "losses": report.losses,
            "pre_accuracy": report.pre_accuracy,
            "post_accuracy": report.post_accuracy,
        }},
    )
    return report
