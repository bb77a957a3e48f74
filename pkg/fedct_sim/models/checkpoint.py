"""
JSON checkpoints for model snapshots and server state.

Document layout (keys in this order):

    format        "fedct-sim/checkpoint"
    version       integer format version
    config_hash   hash of the experiment configuration
    master_seed   seed of the run that wrote it, or null for a bare snapshot
    round         communication round of the snapshot
    origin        client id, or null for the server's global model
    architecture  ModelConfig fields
    params        flat parameter list in canonical order
                  (encoder W, b per layer, then classifier W, b; row-major)
"""

import json
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Union

from .mlp import ModelConfig, ModelSnapshot
from ..utils.errors import InputError

CHECKPOINT_FORMAT = "fedct-sim/checkpoint"
CHECKPOINT_VERSION = 2


class Checkpoint(NamedTuple):
    snapshot: ModelSnapshot
    config_hash: str
    master_seed: Optional[int]


def snapshot_to_dict(snapshot: ModelSnapshot, config_hash: str,
                     master_seed: Optional[int] = None) -> Dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "master_seed": master_seed,
        "round": snapshot.round,
        "origin": snapshot.origin_client,
        "architecture": snapshot.config.model_dump(mode="json"),
        "params": snapshot.flat().tolist(),
    }


def snapshot_from_dict(data: Dict[str, Any]) -> Checkpoint:
    """
    Rebuild a snapshot from its checkpoint document.

    Returns:
        Checkpoint(snapshot, config_hash, master_seed)

    Raises:
        InputError: If the document is not a supported checkpoint
    """
    if data.get("format") != CHECKPOINT_FORMAT:
        raise InputError(f"Not a checkpoint document (format={data.get('format')!r})")
    if data.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"Unsupported checkpoint version {data.get('version')!r}")
    config = ModelConfig(**data["architecture"])
    snapshot = ModelSnapshot.from_flat(config, data["params"], data["origin"], int(data["round"]))
    seed = data.get("master_seed")
    return Checkpoint(snapshot, data["config_hash"], None if seed is None else int(seed))


def save_checkpoint(snapshot: ModelSnapshot, path: Union[str, Path], config_hash: str,
                    master_seed: Optional[int] = None) -> Path:
    """
    Write a snapshot checkpoint.

    Args:
        snapshot: Snapshot to persist
        path: Destination file; parent directories are created
        config_hash: Hash of the experiment configuration
        master_seed: Seed of the writing run; the config hash leaves it out

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(snapshot_to_dict(snapshot, config_hash, master_seed), f)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint written by ``save_checkpoint``."""
    with open(path, "r") as f:
        return snapshot_from_dict(json.load(f))
