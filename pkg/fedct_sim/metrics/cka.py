"""
Linear centered kernel alignment and knowledge-preservation reports.
"""

from typing import Dict, List, Literal, Mapping, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from ..autograd import Tensor
from ..utils.errors import InputError

CKA_EPS = 1e-12

Matrix = Union[np.ndarray, Tensor]


def _as_array(features: Matrix) -> np.ndarray:
    if isinstance(features, Tensor):
        return features.data
    array = np.asarray(features, dtype=np.float64)
    if array.ndim != 2:
        raise InputError(f"linear_cka expects 2-D feature matrices, got shape {array.shape}")
    return array


def linear_cka(features_a: Matrix, features_b: Matrix) -> float:
    """
    Linear CKA between two feature matrices over the same n probe points.

    Columns are centred, then ``|B^T A|_F^2 / (|A^T A|_F |B^T B|_F)``; the
    result is 0 when either denominator term is below 1e-12.

    Args:
        features_a: n×d1 features
        features_b: n×d2 features

    Returns:
        Similarity in [0, 1]

    Raises:
        InputError: If the row counts differ or n < 2
    """
    a = _as_array(features_a)
    b = _as_array(features_b)
    if a.shape[0] != b.shape[0]:
        raise InputError(f"linear_cka: row counts differ ({a.shape[0]} vs {b.shape[0]})")
    if a.shape[0] < 2:
        raise InputError("linear_cka needs at least two rows")

    a = a - a.mean(axis=0, keepdims=True)
    b = b - b.mean(axis=0, keepdims=True)
    norm_aa = np.linalg.norm(a.T @ a)
    norm_bb = np.linalg.norm(b.T @ b)
    if norm_aa < CKA_EPS or norm_bb < CKA_EPS:
        return 0.0
    cross = np.linalg.norm(b.T @ a)
    return float(cross * cross / (norm_aa * norm_bb))


class CkaPair(BaseModel):
    model_a: str
    model_b: str
    value: float = Field(..., ge=0.0, le=1.0 + 1e-9)


class CkaReport(BaseModel):
    """
    CKA values between pairs of models.

    ``local_view`` pairs a model before and after cross-training;
    ``global_view`` pairs different clients' models at the same point.
    """
    mode: Literal["local_view", "global_view"]
    pairs: List[CkaPair] = Field(default_factory=list)
    probe_set: str = ""

    def values(self) -> List[float]:
        return [pair.value for pair in self.pairs]


class KnowledgePreservationReport(BaseModel):
    """
    Local/global CKA views plus per-class recall before and after exchange.

    Recall maps are keyed by origin client, then class; None marks a class
    absent from that client's test split.
    """
    round: int = 0
    local_view: CkaReport
    global_view: CkaReport
    recall_before: Dict[int, Dict[int, Optional[float]]] = Field(default_factory=dict)
    recall_after: Dict[int, Dict[int, Optional[float]]] = Field(default_factory=dict)
    recall_delta: Dict[int, Dict[int, Optional[float]]] = Field(default_factory=dict)

    def to_json(self) -> str:
        return self.model_dump_json()

    @classmethod
    def from_json(cls, json_str: str) -> "KnowledgePreservationReport":
        return cls.model_validate_json(json_str)


def _recall_delta(before: Mapping[int, Optional[float]],
                  after: Mapping[int, Optional[float]]) -> Dict[int, Optional[float]]:
    delta: Dict[int, Optional[float]] = {}
    for label, pre in before.items():
        post = after.get(label)
        delta[label] = None if pre is None or post is None else post - pre
    return delta


def knowledge_preservation_report(pre_models, post_models, shards, probe_set, round: int = 0,
                                  probe_name: str = "pooled-test-probe") -> KnowledgePreservationReport:
    """
    Measure how much each model keeps of its origin client's knowledge.

    Local view: CKA between the features of the pre-exchange model and its
    cross-trained descendant on the origin client's test split. Global view:
    pairwise CKA between the post-exchange models on the shared probe set.
    Recall is measured on the origin client's test split.

    Args:
        pre_models: Mapping origin client -> ModelSnapshot before exchange
        post_models: Mapping origin client -> ModelSnapshot after cross-training
        shards: Mapping client -> Shard
        probe_set: Dataset shared by all global-view comparisons
        round: Round the report belongs to
        probe_name: Identifier recorded with the global view

    Returns:
        KnowledgePreservationReport

    Raises:
        InputError: If the probe set is empty
    """
    from .evaluation import extract_features, per_class_recall

    if len(probe_set) == 0:
        raise InputError("knowledge_preservation_report needs a non-empty probe set")

    local_pairs: List[CkaPair] = []
    recall_before: Dict[int, Dict[int, Optional[float]]] = {}
    recall_after: Dict[int, Dict[int, Optional[float]]] = {}
    recall_delta: Dict[int, Dict[int, Optional[float]]] = {}
    for origin in sorted(post_models):
        if origin not in pre_models:
            continue
        owner_test = shards[origin].test
        if len(owner_test) >= 2:
            value = linear_cka(
                extract_features(pre_models[origin], owner_test),
                extract_features(post_models[origin], owner_test),
            )
            local_pairs.append(CkaPair(model_a=f"client{origin}@pre", model_b=f"client{origin}@post", value=value))
        before = per_class_recall(pre_models[origin], owner_test)
        after = per_class_recall(post_models[origin], owner_test)
        recall_before[origin] = before
        recall_after[origin] = after
        recall_delta[origin] = _recall_delta(before, after)

    probe_features = {origin: extract_features(post_models[origin], probe_set) for origin in sorted(post_models)}
    global_pairs: List[CkaPair] = []
    origins = sorted(probe_features)
    for i, first in enumerate(origins):
        for second in origins[i + 1:]:
            value = linear_cka(probe_features[first], probe_features[second])
            global_pairs.append(CkaPair(model_a=f"client{first}", model_b=f"client{second}", value=value))

    return KnowledgePreservationReport(
        round=round,
        local_view=CkaReport(mode="local_view", pairs=local_pairs, probe_set="owner-test-split"),
        global_view=CkaReport(mode="global_view", pairs=global_pairs, probe_set=probe_name),
        recall_before=recall_before,
        recall_after=recall_after,
        recall_delta=recall_delta,
    )
