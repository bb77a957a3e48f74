"""
Label-skewed client partitioning via per-class Dirichlet proportions.
"""

from dataclasses import dataclass
from typing import List

import numpy as np
from pydantic import BaseModel, Field

from .synthetic import Dataset, concatenate
from ..utils.errors import InputError, PartitionError
from ..utils.logger import get_logger

logger = get_logger("data.partition")


class PartitionSpec(BaseModel):
    """
    Parameters of a Dirichlet label-skew partition.
    """
    num_clients: int = Field(..., ge=2, description="Number of clients N")
    beta: float = Field(..., gt=0, description="Dirichlet concentration; smaller is more skewed")
    seed: int = Field(..., description="Partition seed")
    min_samples_per_client: int = Field(1, ge=1, description="Redraw until every client has this many samples")
    max_retries: int = Field(1000, ge=1, description="Bound on the number of redraws")
    test_fraction: float = Field(0.2, ge=0.0, lt=1.0, description="Per-shard held-out fraction")


@dataclass(frozen=True)
class Shard:
    """
    One client's slice of the dataset, split into train and test.

    ``train_indices``/``test_indices`` index the full dataset.
    """
    owner: int
    train: Dataset
    test: Dataset
    train_indices: np.ndarray
    test_indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.train) + len(self.test)

    @property
    def class_histogram(self) -> np.ndarray:
        return self.train.class_histogram() + self.test.class_histogram()

    @property
    def indices(self) -> np.ndarray:
        return np.sort(np.concatenate([self.train_indices, self.test_indices]))


def pooled_test_set(shards: List[Shard]) -> Dataset:
    """Union of the shards' test splits, in client order."""
    return concatenate([shard.test for shard in shards])


def _draw_buckets(labels: np.ndarray, num_classes: int, spec: PartitionSpec, rng: np.random.Generator) -> List[np.ndarray]:
    buckets: List[List[int]] = [[] for _ in range(spec.num_clients)]
    for k in range(num_classes):
        members = rng.permutation(np.flatnonzero(labels == k))
        proportions = rng.dirichlet(np.full(spec.num_clients, spec.beta))
        cuts = (np.cumsum(proportions) * len(members)).astype(int)[:-1]
        for client, part in enumerate(np.split(members, cuts)):
            buckets[client].extend(part.tolist())
    return [np.array(sorted(bucket), dtype=np.int64) for bucket in buckets]


def _stratified_split(indices: np.ndarray, labels: np.ndarray, test_fraction: float, rng: np.random.Generator):
    train: List[int] = []
    test: List[int] = []
    shard_labels = labels[indices]
    for k in np.unique(shard_labels):
        members = rng.permutation(indices[shard_labels == k])
        n_test = int(round(test_fraction * len(members))) if len(members) >= 2 else 0
        test.extend(members[:n_test].tolist())
        train.extend(members[n_test:].tolist())

    # every shard with two or more samples keeps at least one test point
    if not test and test_fraction > 0 and len(indices) >= 2:
        train_labels = labels[np.array(train)]
        largest = int(np.bincount(train_labels).argmax())
        donor = min(i for i in train if labels[i] == largest)
        train.remove(donor)
        test.append(donor)

    return np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64)


def dirichlet_partition(data: Dataset, spec: PartitionSpec) -> List[Shard]:
    """
    Split ``data`` across clients with Dirichlet label skew.

    For each class, proportions ``p ~ Dir(beta * 1_N)`` divide that class's
    shuffled indices among clients. The draw is repeated until every client
    holds ``min_samples_per_client`` samples. Each shard is then split
    train/test per class.

    Args:
        data: Full dataset
        spec: Partition parameters

    Returns:
        Shards ordered by client id

    Raises:
        PartitionError: If the dataset is too small or the retry budget is exhausted
    """
    needed = spec.min_samples_per_client * spec.num_clients
    if len(data) < needed:
        raise PartitionError(
            f"Dataset has {len(data)} samples, fewer than min_samples_per_client x num_clients = {needed}"
        )

    rng = np.random.default_rng(spec.seed)
    buckets = None
    for attempt in range(1, spec.max_retries + 1):
        candidate = _draw_buckets(data.labels, data.num_classes, spec, rng)
        smallest = min(len(bucket) for bucket in candidate)
        if smallest >= spec.min_samples_per_client:
            buckets = candidate
            break
        logger.debug(
            "Partition draw rejected",
            extra={"context": {"attempt": attempt, "smallest_client": smallest}},
        )
    if buckets is None:
        raise PartitionError(
            f"No draw gave every client >= {spec.min_samples_per_client} samples "
            f"within {spec.max_retries} retries (beta={spec.beta})"
        )

    shards = []
    for client, bucket in enumerate(buckets):
        train_idx, test_idx = _stratified_split(bucket, data.labels, spec.test_fraction, rng)
        shards.append(Shard(
            owner=client,
            train=data.subset(train_idx),
            test=data.subset(test_idx),
            train_indices=train_idx,
            test_indices=test_idx,
        ))
    return shards


def batches(shard: Shard, batch_size: int, epoch_seed: int) -> List[np.ndarray]:
    """
    Shuffle the shard's train rows and cut them into batches.

    Args:
        shard: Client shard
        batch_size: Rows per batch (the last batch may be shorter)
        epoch_seed: Shuffle seed

    Returns:
        Batches of row positions into ``shard.train``

    Raises:
        InputError: If batch_size < 1
    """
    if batch_size < 1:
        raise InputError("batch_size must be at least 1")
    order = np.random.default_rng(epoch_seed).permutation(len(shard.train))
    return [order[start:start + batch_size] for start in range(0, len(order), batch_size)]
