"""
Synthetic Gaussian-mixture classification data.

This module provides the Dataset container used by every other subpackage and
the generator that stands in for an image benchmark.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..utils.errors import DimensionError, InputError


@dataclass(frozen=True)
class Dataset:
    """
    Labeled feature matrix.

    Arrays are stored read-only; ``subset`` and ``concatenate`` build new datasets.
    """
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise DimensionError(f"Dataset features must be 2-D, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise DimensionError(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if self.num_classes < 1:
            raise InputError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InputError(f"Dataset labels must lie in [0, {self.num_classes})")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        index = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[index], self.labels[index], self.num_classes)

    def class_histogram(self) -> np.ndarray:
        """Per-class sample counts, length ``num_classes``."""
        return np.bincount(self.labels, minlength=self.num_classes)

    def to_csv(self, path: Union[str, Path]) -> None:
        """
        Write the dataset as CSV with header ``f0..f{d-1},label``.

        Args:
            path: Destination file
        """
        frame = pd.DataFrame(self.features, columns=[f"f{i}" for i in range(self.dim)])
        frame["label"] = self.labels
        frame.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: Union[str, Path], num_classes: Optional[int] = None) -> "Dataset":
        """
        Read a dataset written by ``to_csv``.

        Args:
            path: Source file
            num_classes: Class count; defaults to ``max(label) + 1``

        Returns:
            Dataset instance

        Raises:
            InputError: If the file has no ``label`` column
        """
        frame = pd.read_csv(path)
        if "label" not in frame.columns:
            raise InputError(f"{path} has no 'label' column")
        labels = frame.pop("label").to_numpy(dtype=np.int64)
        features = frame.to_numpy(dtype=np.float64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 1
        return cls(features, labels, num_classes)


def concatenate(datasets: List[Dataset]) -> Dataset:
    """
    Stack datasets row-wise (e.g. to pool shard test splits).

    Raises:
        InputError: If the list is empty or the class counts differ
    """
    if not datasets:
        raise InputError("concatenate needs at least one dataset")
    num_classes = datasets[0].num_classes
    if any(d.num_classes != num_classes for d in datasets):
        raise InputError("Cannot concatenate datasets with different class counts")
    return Dataset(
        np.concatenate([d.features for d in datasets], axis=0),
        np.concatenate([d.labels for d in datasets], axis=0),
        num_classes,
    )


def make_synthetic(num_classes: int, per_class: int, dim: int, class_separation: float, seed: int) -> Dataset:
    """
    Draw a balanced Gaussian mixture.

    Class ``k`` is an isotropic unit-variance Gaussian centred on a random unit
    direction scaled by ``class_separation``. Rows are ordered class by class.

    Args:
        num_classes: Number of classes K (>= 2)
        per_class: Samples per class (>= 2)
        dim: Input width
        class_separation: Length of each class mean (> 0)
        seed: Generator seed

    Returns:
        Dataset with ``num_classes * per_class`` rows

    Raises:
        InputError: If a precondition is violated
    """
    if num_classes < 2:
        raise InputError("make_synthetic needs at least 2 classes")
    if per_class < 2:
        raise InputError("make_synthetic needs at least 2 samples per class")
    if dim < 1:
        raise InputError("make_synthetic needs a positive dimension")
    if class_separation <= 0:
        raise InputError("class_separation must be positive")

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((num_classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * class_separation

    features = np.concatenate(
        [means[k] + rng.standard_normal((per_class, dim)) for k in range(num_classes)], axis=0
    )
    labels = np.repeat(np.arange(num_classes), per_class)
    return Dataset(features, labels, num_classes)
