"""
Consistency-aware knowledge broadcasting.

The server scores every classifier on every other client's prototypes and
turns the resulting matrix into a derangement of model hand-overs.
"""

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..autograd import Tensor, no_grad, softmax_cross_entropy
from ..losses.prototypes import PrototypeSet
from ..models.mlp import ClassifierParams, classify
from ..utils.errors import ConsistencyMatrixError, InputError


class BroadcastStrategy(str, Enum):
    CONSISTENCY = "consistency"
    INCONSISTENCY = "inconsistency"
    RANDOM = "random"
    OPTIMAL = "optimal"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class ConsistencyMatrix:
    """
    ``values[i][j]``: cross-entropy of client i's classifier on client j's prototypes.

    Rows and columns follow ``client_ids``.
    """
    values: np.ndarray
    client_ids: List[int]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        size = len(self.client_ids)
        if values.shape != (size, size):
            raise InputError(f"Consistency matrix shape {values.shape} does not match {size} clients")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InputError("Consistency matrix entries must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "client_ids", list(self.client_ids))

    def entry(self, source: int, target: int) -> float:
        """Entry for client ids (not positions)."""
        position = {cid: i for i, cid in enumerate(self.client_ids)}
        return float(self.values[position[source], position[target]])


@dataclass(frozen=True)
class BroadcastPlan:
    """
    Source client -> target client receiving the source's model.
    """
    strategy: BroadcastStrategy
    assignment: Dict[int, int] = field(default_factory=dict)
    matrix: Optional[ConsistencyMatrix] = None

    def encode(self) -> str:
        """Compact form ``src>dst;src>dst`` in ascending source order."""
        return ";".join(f"{src}>{dst}" for src, dst in sorted(self.assignment.items()))

    def cost(self, matrix: Optional[ConsistencyMatrix] = None) -> float:
        """Sum of the chosen matrix entries."""
        matrix = matrix or self.matrix
        if matrix is None:
            raise InputError("BroadcastPlan.cost needs a consistency matrix")
        return float(sum(matrix.entry(src, dst) for src, dst in sorted(self.assignment.items())))

    def is_derangement(self) -> bool:
        sources = set(self.assignment)
        targets = set(self.assignment.values())
        return (
            sources == targets
            and len(targets) == len(self.assignment)
            and all(src != dst for src, dst in self.assignment.items())
        )


def build_consistency_matrix(classifiers: Mapping[int, ClassifierParams],
                             prototype_sets: Mapping[int, PrototypeSet]) -> ConsistencyMatrix:
    """
    Score each classifier on each client's local prototypes.

    ``v[i][j]`` is the mean cross-entropy of classifier i on the prototypes of
    client j against their class labels, over the classes client j has.

    Args:
        classifiers: Client id -> classifier
        prototype_sets: Client id -> local prototype set

    Returns:
        ConsistencyMatrix over the clients in ascending id order

    Raises:
        InputError: If fewer than two clients are given or the key sets differ
        ConsistencyMatrixError: If some client has an empty prototype set
    """
    client_ids = sorted(classifiers)
    if len(client_ids) < 2:
        raise InputError("A consistency matrix needs at least two clients")
    if sorted(prototype_sets) != client_ids:
        raise InputError("Classifiers and prototype sets must cover the same clients")

    inputs = {}
    for cid in client_ids:
        protos, labels = prototype_sets[cid].matrix()
        if not labels:
            raise ConsistencyMatrixError(f"Client {cid} has an empty prototype set", client_id=cid)
        inputs[cid] = (Tensor(protos), labels)

    values = np.zeros((len(client_ids), len(client_ids)))
    with no_grad():
        for i, scorer in enumerate(client_ids):
            for j, owner in enumerate(client_ids):
                protos, labels = inputs[owner]
                logits = classify(classifiers[scorer], protos)
                values[i, j] = softmax_cross_entropy(logits, labels).item()
    return ConsistencyMatrix(values, client_ids)


def _greedy_assignment(matrix: ConsistencyMatrix, prefer_low: bool) -> Dict[int, int]:
    ids = matrix.client_ids
    position = {cid: i for i, cid in enumerate(ids)}
    free = list(ids)
    assignment: Dict[int, int] = {}
    for step, source in enumerate(ids):
        later = ids[step + 1:]
        # never strand the last source with only itself left
        if len(later) == 1 and later[0] in free and later[0] != source:
            choice = later[0]
        else:
            candidates = [t for t in free if t != source]
            row = matrix.values[position[source]]
            scores = [row[position[t]] for t in candidates]
            pick = int(np.argmin(scores)) if prefer_low else int(np.argmax(scores))
            choice = candidates[pick]
        assignment[source] = choice
        free.remove(choice)
    return assignment


def _optimal_assignment(matrix: ConsistencyMatrix) -> Dict[int, int]:
    cost = np.array(matrix.values, dtype=np.float64)
    np.fill_diagonal(cost, np.inf)
    rows, cols = linear_sum_assignment(cost)
    return {matrix.client_ids[r]: matrix.client_ids[c] for r, c in zip(rows, cols)}


def random_derangement(client_ids: Sequence[int], seed: int) -> Dict[int, int]:
    """
    Uniform random derangement by rejection sampling.

    Raises:
        InputError: If fewer than two clients are given
    """
    ids = list(client_ids)
    if len(ids) < 2:
        raise InputError("A derangement needs at least two clients")
    rng = np.random.default_rng(seed)
    while True:
        order = rng.permutation(len(ids))
        if np.all(order != np.arange(len(ids))):
            return {ids[i]: ids[int(order[i])] for i in range(len(ids))}


def build_broadcast_plan(matrix: Optional[ConsistencyMatrix], strategy, seed: int = 0,
                         client_ids: Optional[Sequence[int]] = None) -> BroadcastPlan:
    """
    Turn the consistency matrix into model hand-overs.

    consistency: sources in ascending id order each take the free target with
    the lowest entry (ties to the lowest id). inconsistency: the same with the
    highest entry. optimal: the derangement minimising the summed entries.
    random: a seeded uniform derangement. none: an empty plan.

    Args:
        matrix: Consistency matrix (may be None for random/none)
        strategy: BroadcastStrategy or its value
        seed: Seed for the random strategy
        client_ids: Participants, when no matrix is given

    Returns:
        BroadcastPlan whose assignment is a derangement unless strategy is none

    Raises:
        InputError: If fewer than two clients take part or a matrix is missing
    """
    strategy = BroadcastStrategy(strategy)
    if strategy == BroadcastStrategy.NONE:
        return BroadcastPlan(strategy, {}, matrix)

    ids = list(matrix.client_ids) if matrix is not None else sorted(client_ids or [])
    if len(ids) < 2:
        raise InputError("Broadcasting needs at least two participating clients")

    if strategy == BroadcastStrategy.RANDOM:
        return BroadcastPlan(strategy, random_derangement(ids, seed), matrix)
    if matrix is None:
        raise InputError(f"Strategy '{strategy.value}' needs a consistency matrix")
    if strategy == BroadcastStrategy.OPTIMAL:
        return BroadcastPlan(strategy, _optimal_assignment(matrix), matrix)
    prefer_low = strategy == BroadcastStrategy.CONSISTENCY
    return BroadcastPlan(strategy, _greedy_assignment(matrix, prefer_low), matrix)


def optimal_derangement_cost(matrix: ConsistencyMatrix, maximize: bool = False) -> float:
    """
    Exhaustive best derangement cost (feasible for about 8 clients or fewer).
    """
    values = matrix.values
    size = len(matrix.client_ids)
    best = None
    for order in itertools.permutations(range(size)):
        if any(i == order[i] for i in range(size)):
            continue
        total = float(sum(values[i, order[i]] for i in range(size)))
        if best is None or (total > best if maximize else total < best):
            best = total
    return best
