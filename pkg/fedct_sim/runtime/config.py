"""
Experiment configuration.

A config document is a YAML mapping of sections; every key is optional and
unknown keys are rejected::

    data:      {num_classes: 10, per_class: 120, dim: 32, separation: 2.0}
    partition: {num_clients: 10, beta: 0.5, min_samples: 10, seed: null}
    model:     {hidden: [64], feature_dim: 16}
    train:     {rounds: 40, local_epochs: 3, cross_epochs: 3, lr: 0.01, ...}
    fedct:     {strategy: consistency, exchange_iterations: 1, lambda_fuse: 0.5, ...}
    run:       {master_seed: 0, output_dir: runs, checkpoint_every: 0, ...}
"""

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..losses.objectives import LossWeights
from ..models.mlp import ModelConfig
from ..protocol.broadcast import BroadcastStrategy
from ..utils.errors import ConfigError

HASH_EXCLUDED = (("run", "output_dir"), ("run", "master_seed"))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class DataSection(_Section):
    num_classes: int = Field(10, ge=2, description="Number of classes K")
    per_class: int = Field(120, ge=2, description="Samples generated per class")
    dim: int = Field(32, ge=1, description="Input dimension")
    separation: float = Field(2.0, gt=0, description="Distance of each class mean from the origin")


class PartitionSection(_Section):
    num_clients: int = Field(10, ge=2, description="Number of clients N")
    beta: float = Field(0.5, gt=0, description="Dirichlet concentration")
    min_samples: int = Field(10, ge=1, description="Minimum samples per client")
    seed: Optional[int] = Field(None, ge=0, description="Partition seed; derived from the master seed when null")
    max_retries: int = Field(1000, ge=1, description="Redraw budget of the partition")


class ModelSection(_Section):
    hidden: Tuple[int, ...] = Field((64,), description="Hidden widths of the encoder")
    feature_dim: int = Field(16, ge=1, description="Feature dimension d")

    @model_validator(mode="after")
    def _check_hidden(self):
        if any(width < 1 for width in self.hidden):
            raise ValueError("hidden widths must be positive")
        return self


class TrainSection(_Section):
    rounds: int = Field(40, ge=0, description="Communication rounds")
    local_epochs: int = Field(3, ge=0, description="Phase I epochs")
    cross_epochs: int = Field(3, ge=0, description="Phase III epochs")
    lr: float = Field(0.01, gt=0, description="Learning rate")
    weight_decay: float = Field(1e-5, ge=0, description="Weight decay")
    batch_size: int = Field(32, ge=1, description="Batch size")
    client_fraction: float = Field(1.0, gt=0, le=1.0, description="Fraction C of clients per round")
    momentum: float = Field(0.0, ge=0, lt=1.0, description="SGD momentum")


class FedctSection(_Section):
    strategy: BroadcastStrategy = Field(BroadcastStrategy.CONSISTENCY, description="Broadcast strategy")
    exchange_iterations: int = Field(
        1, ge=1, validation_alias=AliasChoices("exchange_iterations", "N_e"),
        description="Broadcast + cross-training iterations per round",
    )
    lambda_fuse: float = Field(0.5, ge=0, le=1, description="Weight of the global prototype view")
    lambda_hy: float = Field(0.3, ge=0, le=1, description="Hybrid feature extrapolation")
    lambda_mix: float = Field(0.3, ge=0, le=1, description="Mixup coefficient")
    kappa: float = Field(1.0, ge=0, description="Weight of the prototypical contrastive term")
    eta: float = Field(0.1, ge=0, description="Weight of the mixup term")
    tau2: float = Field(0.05, gt=0, description="Contrastive temperature")
    mfa_partner: Literal["sample", "prototype"] = Field("sample", description="Mixup partner")
    refresh_prototypes_per_exchange: bool = Field(False, description="Recompute prototypes between iterations")


class RunSection(_Section):
    master_seed: int = Field(0, ge=0, description="Seed all randomness derives from")
    output_dir: str = Field("runs", description="Root of the output tree")
    checkpoint_every: int = Field(0, ge=0, description="Checkpoint period in rounds (0 disables)")
    target_accuracy: float = Field(0.6, ge=0, le=1, description="Threshold for rounds-to-target")
    knowledge_report_every: int = Field(0, ge=0, description="Knowledge-preservation report period (0 disables)")
    export_features: bool = Field(False, description="Write final global features of the pooled test set")
    record_wall_time: bool = Field(False, description="Record per-round wall time in rounds.jsonl")
    show_progress: bool = Field(False, description="Show a progress bar per seed")


class ExperimentConfig(_Section):
    """
    Fully validated experiment configuration.
    """
    data: DataSection = Field(default_factory=DataSection)
    partition: PartitionSection = Field(default_factory=PartitionSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    fedct: FedctSection = Field(default_factory=FedctSection)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def _check_exchange_participants(self):
        if self.fedct.strategy != BroadcastStrategy.NONE:
            participants = math.ceil(self.train.client_fraction * self.partition.num_clients - 1e-9)
            if participants < 2:
                raise ValueError(
                    f"strategy '{self.fedct.strategy.value}' needs at least two participants per round, "
                    f"client_fraction x num_clients gives {participants}"
                )
        return self

    def loss_weights(self) -> LossWeights:
        fedct = self.fedct
        return LossWeights(
            kappa=fedct.kappa,
            eta=fedct.eta,
            tau2=fedct.tau2,
            lambda_hy=fedct.lambda_hy,
            lambda_mix=fedct.lambda_mix,
            lambda_fuse=fedct.lambda_fuse,
        )

    def architecture(self) -> ModelConfig:
        return ModelConfig(
            input_dim=self.data.dim,
            hidden=self.model.hidden,
            feature_dim=self.model.feature_dim,
            num_classes=self.data.num_classes,
        )

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        """12 hex characters identifying everything but the output directory and master seed."""
        payload = self.to_dict()
        for section, key in HASH_EXCLUDED:
            payload[section].pop(key, None)
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def dump(self) -> str:
        """YAML document that ``parse_config`` reads back to an equal config."""
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _error_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<document>"


def validate_config(document: Mapping[str, Any]) -> ExperimentConfig:
    """
    Validate a parsed document.

    Raises:
        ConfigError: Naming the dotted key path of the first problem
    """
    if document is None:
        document = {}
    if not isinstance(document, Mapping):
        raise ConfigError("<document>", f"expected a mapping of sections, got {type(document).__name__}")
    try:
        return ExperimentConfig.model_validate(dict(document))
    except ValidationError as exc:
        errors = exc.errors()
        first = errors[0]
        details = "; ".join(f"{_error_path(e)}: {e['msg']}" for e in errors)
        raise ConfigError(_error_path(first), details) from None


def _read_source(source: Union[str, Path, None]) -> str:
    if source is None:
        return ""
    if isinstance(source, Path):
        return source.read_text()
    if "\n" not in source and source.endswith((".yaml", ".yml", ".cfg", ".conf")):
        path = Path(source)
        if not path.exists():
            raise ConfigError("<document>", f"config file {source} does not exist")
        return path.read_text()
    return source


def parse_config(source: Union[str, Path, None] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """
    Parse and validate a config document.

    Args:
        source: Path to a YAML file, the YAML text itself, or None for defaults
        overrides: ``section.key=value`` strings applied on top

    Returns:
        ExperimentConfig with defaults filled in

    Raises:
        ConfigError: On YAML syntax errors, unknown keys, bad types or out-of-range values
    """
    text = _read_source(source)
    try:
        document = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"invalid YAML: {exc}") from None
    if document is None:
        document = {}
    if not isinstance(document, Mapping):
        raise ConfigError("<document>", f"expected a mapping of sections, got {type(document).__name__}")
    return validate_config(_apply(dict(document), overrides))


def _apply(document: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(item, "override must look like section.key=value")
        parts = key.split(".")
        if len(parts) != 2:
            raise ConfigError(key, "override key must be section.key")
        try:
            value = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"cannot parse value {raw!r}: {exc}") from None
        section, name = parts
        current = document.get(section)
        if current is None:
            current = {}
        if not isinstance(current, Mapping):
            raise ConfigError(section, "section must be a mapping")
        document[section] = {**current, name: value}
    return document


def apply_overrides(config: ExperimentConfig, overrides: Iterable[str]) -> ExperimentConfig:
    """New config with ``section.key=value`` overrides applied."""
    return validate_config(_apply(config.to_dict(), overrides))


def with_updates(config: ExperimentConfig, updates: Mapping[str, Any]) -> ExperimentConfig:
    """
    New config with typed updates, e.g. ``{"fedct.kappa": 0.0}``.

    Raises:
        ConfigError: If a key is malformed or the result is invalid
    """
    document = config.to_dict()
    for key, value in updates.items():
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in document:
            raise ConfigError(key, "update key must be section.key")
        document[parts[0]][parts[1]] = value.value if isinstance(value, BroadcastStrategy) else value
    return validate_config(document)
