"""
Models module: the local encoder/classifier, snapshots and checkpoints.
"""

from .mlp import (
    ModelConfig,
    LinearParams,
    EncoderParams,
    ClassifierParams,
    ModelSnapshot,
    LocalModel,
    init_model,
    encode,
    classify,
    sgd_step,
)
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint, snapshot_to_dict, snapshot_from_dict

__all__ = [
    "ModelConfig",
    "LinearParams",
    "EncoderParams",
    "ClassifierParams",
    "ModelSnapshot",
    "LocalModel",
    "init_model",
    "encode",
    "classify",
    "sgd_step",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "snapshot_to_dict",
    "snapshot_from_dict",
]
