"""
The local model F = E ⊙ H: an MLP encoder and a linear classifier.

This module provides the live (trainable) model, immutable snapshots that are
exchanged between clients and the server, and the SGD update.
"""

import hashlib
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..autograd import Tensor, add, matmul, relu
from ..utils.errors import ContractError, DimensionError, InputError


class ModelConfig(BaseModel):
    """
    Architecture of the local model.
    """
    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(32, ge=1, description="Input width d_in")
    hidden: Tuple[int, ...] = Field((64,), description="Hidden layer widths of the encoder (ReLU)")
    feature_dim: int = Field(16, ge=1, description="Encoder output width d")
    num_classes: int = Field(10, ge=2, description="Classifier output width K")

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """Weight shapes of the encoder layers, input to feature."""
        widths = [self.input_dim, *self.hidden, self.feature_dim]
        return [(widths[i], widths[i + 1]) for i in range(len(widths) - 1)]

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


@dataclass
class LinearParams:
    """Weight (fan_in × fan_out) and bias (1 × fan_out)."""
    weight: Tensor
    bias: Tensor


@dataclass
class EncoderParams:
    """Encoder layers; every layer but the last is followed by ReLU."""
    layers: List[LinearParams]
    feature_dim: int


@dataclass
class ClassifierParams:
    """Linear classifier over the encoder features."""
    weight: Tensor
    bias: Tensor


def encode(encoder: EncoderParams, x: Tensor) -> Tensor:
    """
    Map inputs to features.

    Args:
        encoder: Encoder parameters
        x: b×d_in inputs

    Returns:
        b×d features (not normalized)

    Raises:
        DimensionError: If the input width does not match the first layer
    """
    first = encoder.layers[0].weight
    if x.cols != first.rows:
        raise DimensionError(f"encode: input width {x.cols} does not match model input {first.rows}")
    hidden = x
    last = len(encoder.layers) - 1
    for position, layer in enumerate(encoder.layers):
        hidden = add(matmul(hidden, layer.weight), layer.bias)
        if position < last:
            hidden = relu(hidden)
    return hidden


def classify(classifier: ClassifierParams, features: Tensor) -> Tensor:
    """
    Logits ``features @ W + bias``.

    Raises:
        DimensionError: If the feature width does not match the classifier
    """
    if features.cols != classifier.weight.rows:
        raise DimensionError(
            f"classify: feature width {features.cols} does not match classifier input {classifier.weight.rows}"
        )
    return add(matmul(features, classifier.weight), classifier.bias)


def _frozen(array: np.ndarray) -> np.ndarray:
    copy = np.array(array, dtype=np.float64, copy=True)
    copy.setflags(write=False)
    return copy


@dataclass(frozen=True, eq=False)
class ModelSnapshot:
    """
    Immutable copy of a model's parameters.

    ``origin_client`` is None for server-side (aggregated) snapshots.
    """
    config: ModelConfig
    encoder: Tuple[Tuple[np.ndarray, np.ndarray], ...]
    classifier: Tuple[np.ndarray, np.ndarray]
    origin_client: Optional[int] = None
    round: int = 0

    def arrays(self) -> List[np.ndarray]:
        """Parameter arrays in canonical order: encoder (W, b) per layer, then classifier W, b."""
        ordered = [array for layer in self.encoder for array in layer]
        ordered.extend(self.classifier)
        return ordered

    def flat(self) -> np.ndarray:
        return np.concatenate([array.reshape(-1) for array in self.arrays()])

    def encoder_params(self) -> EncoderParams:
        """Constant (non-trainable) encoder tensors."""
        layers = [LinearParams(Tensor(weight), Tensor(bias)) for weight, bias in self.encoder]
        return EncoderParams(layers=layers, feature_dim=self.config.feature_dim)

    def classifier_params(self) -> ClassifierParams:
        """Constant (non-trainable) classifier tensors."""
        weight, bias = self.classifier
        return ClassifierParams(Tensor(weight), Tensor(bias))

    def relabel(self, origin_client: Optional[int] = None, round: Optional[int] = None) -> "ModelSnapshot":
        """Same parameters under a different origin/round."""
        return ModelSnapshot(
            config=self.config,
            encoder=self.encoder,
            classifier=self.classifier,
            origin_client=origin_client,
            round=self.round if round is None else round,
        )

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: List[np.ndarray],
                    origin_client: Optional[int] = None, round: int = 0) -> "ModelSnapshot":
        """
        Build a snapshot from arrays in canonical order.

        Raises:
            InputError: If the arrays do not match the architecture
        """
        expected = []
        for fan_in, fan_out in config.layer_shapes():
            expected.extend([(fan_in, fan_out), (1, fan_out)])
        expected.extend([(config.feature_dim, config.num_classes), (1, config.num_classes)])
        if len(arrays) != len(expected):
            raise InputError(f"Expected {len(expected)} parameter arrays, got {len(arrays)}")
        shaped = []
        for array, shape in zip(arrays, expected):
            array = np.asarray(array, dtype=np.float64)
            if array.size != shape[0] * shape[1]:
                raise InputError(f"Parameter of shape {array.shape} does not fit {shape}")
            shaped.append(_frozen(array.reshape(shape)))

        encoder = tuple((shaped[i], shaped[i + 1]) for i in range(0, len(shaped) - 2, 2))
        return cls(config, encoder, (shaped[-2], shaped[-1]), origin_client, round)

    @classmethod
    def from_flat(cls, config: ModelConfig, flat: np.ndarray,
                  origin_client: Optional[int] = None, round: int = 0) -> "ModelSnapshot":
        """Inverse of ``flat()``."""
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        shapes = []
        for fan_in, fan_out in config.layer_shapes():
            shapes.extend([(fan_in, fan_out), (1, fan_out)])
        shapes.extend([(config.feature_dim, config.num_classes), (1, config.num_classes)])
        total = sum(r * c for r, c in shapes)
        if flat.size != total:
            raise InputError(f"Flat parameter vector has {flat.size} entries, architecture needs {total}")
        arrays, offset = [], 0
        for rows, cols in shapes:
            arrays.append(flat[offset:offset + rows * cols].reshape(rows, cols))
            offset += rows * cols
        return cls.from_arrays(config, arrays, origin_client, round)


class LocalModel:
    """
    Trainable encoder + classifier.

    Parameters are worker-confined; use ``snapshot()`` to hand them to another worker.
    """

    def __init__(self, config: ModelConfig, encoder: EncoderParams, classifier: ClassifierParams):
        self.config = config
        self.encoder = encoder
        self.classifier = classifier
        self.velocity: Dict[int, np.ndarray] = {}

    def parameters(self) -> List[Tensor]:
        """Live parameter tensors in canonical order."""
        params: List[Tensor] = []
        for layer in self.encoder.layers:
            params.extend([layer.weight, layer.bias])
        params.extend([self.classifier.weight, self.classifier.bias])
        return params

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """Return (features, logits) for a batch."""
        features = encode(self.encoder, x)
        return features, classify(self.classifier, features)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def snapshot(self, origin_client: Optional[int] = None, round: int = 0) -> ModelSnapshot:
        return ModelSnapshot.from_arrays(
            self.config, [param.data for param in self.parameters()], origin_client, round
        )

    def load_snapshot(self, snapshot: ModelSnapshot) -> None:
        """
        Overwrite the live parameters with a snapshot's values.

        Raises:
            InputError: If the snapshot architecture differs
        """
        if snapshot.config != self.config:
            raise InputError("Snapshot architecture does not match the live model")
        for param, array in zip(self.parameters(), snapshot.arrays()):
            param.data = np.array(array, dtype=np.float64, copy=True)
            param.grad = None
        self.velocity = {}

    @classmethod
    def from_snapshot(cls, snapshot: ModelSnapshot) -> "LocalModel":
        layers = [
            LinearParams(Tensor(weight, requires_grad=True), Tensor(bias, requires_grad=True))
            for weight, bias in snapshot.encoder
        ]
        weight, bias = snapshot.classifier
        return cls(
            snapshot.config,
            EncoderParams(layers=layers, feature_dim=snapshot.config.feature_dim),
            ClassifierParams(Tensor(weight, requires_grad=True), Tensor(bias, requires_grad=True)),
        )


def init_model(config: ModelConfig, seed: int) -> ModelSnapshot:
    """
    Draw initial parameters.

    Weights are uniform in ``±sqrt(6 / fan_in)`` (Kaiming-uniform), biases are zero.

    Args:
        config: Architecture
        seed: Generator seed

    Returns:
        Snapshot with origin None and round 0
    """
    rng = np.random.default_rng(seed)
    shapes = config.layer_shapes() + [(config.feature_dim, config.num_classes)]
    arrays = []
    for fan_in, fan_out in shapes:
        bound = np.sqrt(6.0 / fan_in)
        arrays.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        arrays.append(np.zeros((1, fan_out)))
    return ModelSnapshot.from_arrays(config, arrays)


def sgd_step(model: LocalModel, learning_rate: float, weight_decay: float, momentum: float = 0.0) -> None:
    """
    One SGD update ``p <- p - lr * (grad + weight_decay * p)`` on every parameter.

    With ``momentum > 0`` the decayed gradient is accumulated in a velocity
    buffer first. Gradients are cleared afterwards.

    Raises:
        ContractError: If some parameter has no gradient
    """
    params = model.parameters()
    for position, param in enumerate(params):
        if param.grad is None:
            raise ContractError(f"sgd_step: parameter {position} has no gradient; call backward() first")

    for position, param in enumerate(params):
        step = param.grad + weight_decay * param.data
        if momentum > 0.0:
            velocity = model.velocity.get(position)
            step = step if velocity is None else momentum * velocity + step
            model.velocity[position] = step
        param.data = param.data - learning_rate * step
        param.grad = None
