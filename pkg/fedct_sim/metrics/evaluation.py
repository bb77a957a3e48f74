"""
Model evaluation and per-round metric records.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .cka import KnowledgePreservationReport
from ..autograd import Tensor, no_grad
from ..data.synthetic import Dataset
from ..models.mlp import ModelSnapshot, classify, encode
from ..utils.errors import InputError

CSV_COLUMNS = [
    "round",
    "global_acc",
    "mean_client_acc",
    "l_cls",
    "l_apcl",
    "l_mix",
    "strategy",
    "seed",
    "apcl_skip_count",
    "broadcast_plan",
]


def extract_features(snapshot: ModelSnapshot, dataset: Dataset) -> np.ndarray:
    """Encoder features of every row (n×d), computed off the tape."""
    with no_grad():
        return encode(snapshot.encoder_params(), Tensor(dataset.features)).numpy()


def predict(snapshot: ModelSnapshot, dataset: Dataset) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    with no_grad():
        features = encode(snapshot.encoder_params(), Tensor(dataset.features))
        logits = classify(snapshot.classifier_params(), features)
    return np.argmax(logits.data, axis=1)


def accuracy(snapshot: ModelSnapshot, dataset: Dataset) -> float:
    """
    Top-1 accuracy.

    Raises:
        InputError: If the dataset is empty
    """
    if len(dataset) == 0:
        raise InputError("accuracy needs a non-empty dataset")
    hits = int(np.sum(predict(snapshot, dataset) == dataset.labels))
    return hits / len(dataset)


def per_class_recall(snapshot: ModelSnapshot, dataset: Dataset) -> Dict[int, Optional[float]]:
    """
    Recall of every class in ``[0, num_classes)``.

    Returns:
        Mapping class -> recall, with None for classes absent from the dataset
    """
    predictions = predict(snapshot, dataset) if len(dataset) else np.zeros(0, dtype=np.int64)
    recall: Dict[int, Optional[float]] = {}
    for k in range(dataset.num_classes):
        members = dataset.labels == k
        count = int(members.sum())
        recall[k] = None if count == 0 else float(np.sum(predictions[members] == k)) / count
    return recall


def rounds_to_target(trajectory: Sequence[float], target: float) -> Optional[int]:
    """
    First 1-based round whose accuracy reaches ``target``.

    Returns:
        Round number, or None if the target is never reached
    """
    for position, value in enumerate(trajectory, start=1):
        if value >= target:
            return position
    return None


def export_features(snapshot: ModelSnapshot, dataset: Dataset, path: Union[str, Path]) -> Path:
    """
    Write encoder features and labels as CSV (``z0..z{d-1},label``) for external embedding plots.
    """
    features = extract_features(snapshot, dataset)
    frame = pd.DataFrame(features, columns=[f"z{i}" for i in range(features.shape[1])])
    frame["label"] = dataset.labels
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


class LossTerms(BaseModel):
    """Mean loss terms over the round's training steps."""
    l_cls: float = 0.0
    l_apcl: float = 0.0
    l_mix: float = 0.0


class ExchangeRecord(BaseModel):
    """One model hand-over and its effect on the receiving client's test split."""
    iteration: int
    source: int
    target: int
    origin: int
    pre_accuracy: Optional[float] = None
    post_accuracy: Optional[float] = None


class RoundMetrics(BaseModel):
    """
    Everything recorded about one communication round.
    """
    round: int = Field(..., ge=1)
    global_test_accuracy: float = Field(..., ge=0.0, le=1.0)
    client_ids: List[int] = Field(default_factory=list)
    per_client_accuracy: List[float] = Field(default_factory=list)
    loss_terms: LossTerms = Field(default_factory=LossTerms)
    strategy: str = "none"
    seed: int = 0
    broadcast_plan: str = ""
    apcl_skip_count: int = 0
    exchanges: List[ExchangeRecord] = Field(default_factory=list)
    knowledge: Optional[KnowledgePreservationReport] = None
    wall_time: Optional[float] = None

    @property
    def mean_client_accuracy(self) -> float:
        if not self.per_client_accuracy:
            return 0.0
        return float(np.mean(self.per_client_accuracy))

    def csv_row(self) -> Dict[str, object]:
        """One metrics.csv row in ``CSV_COLUMNS`` order."""
        return {
            "round": self.round,
            "global_acc": self.global_test_accuracy,
            "mean_client_acc": self.mean_client_accuracy,
            "l_cls": self.loss_terms.l_cls,
            "l_apcl": self.loss_terms.l_apcl,
            "l_mix": self.loss_terms.l_mix,
            "strategy": self.strategy,
            "seed": self.seed,
            "apcl_skip_count": self.apcl_skip_count,
            "broadcast_plan": self.broadcast_plan,
        }
