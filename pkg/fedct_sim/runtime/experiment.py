"""
Seed sweeps and ablations over the FedCT protocol.

Output layout::

    <output_dir>/<config-hash>/summary.json
    <output_dir>/<config-hash>/<seed>/metrics.csv
    <output_dir>/<config-hash>/<seed>/rounds.jsonl
    <output_dir>/<config-hash>/<seed>/config.resolved
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, Field

from .config import ExperimentConfig, with_updates
from ..losses.objectives import LossWeights
from ..metrics.evaluation import export_features, rounds_to_target
from ..metrics.writer import MetricsWriter
from ..protocol.broadcast import BroadcastStrategy
from ..protocol.server import FederatedServer
from ..utils.errors import InputError
from ..utils.logger import get_logger

logger = get_logger("runtime.experiment")

ABLATION_AXES = ("strategy", "lambda_fuse", "N_e", "modules")
MODULE_ROWS = ("base", "+CAKB", "+CAKB+MFA", "+CAKB+MVKGRL", "full")


class SeedResult(BaseModel):
    seed: int
    final_accuracy: float
    rounds_to_target: Optional[int] = None
    accuracy_trajectory: List[float] = Field(default_factory=list)


class RunSummary(BaseModel):
    """
    Outcome of one config over a list of seeds.

    ``final_accuracy_std`` uses ddof=1 for two or more seeds and is 0 for one.
    """
    config_hash: str
    strategy: str
    seeds: List[int]
    target_accuracy: float
    final_accuracy_mean: float
    final_accuracy_std: float
    per_seed: List[SeedResult] = Field(default_factory=list)
    complete: bool = True

    @property
    def rounds_to_target(self) -> Dict[int, Optional[int]]:
        return {result.seed: result.rounds_to_target for result in self.per_seed}

    @property
    def mean_rounds_to_target(self) -> Optional[float]:
        """Mean over seeds that reached the target; None if none did."""
        reached = [r.rounds_to_target for r in self.per_seed if r.rounds_to_target is not None]
        return float(np.mean(reached)) if reached else None


def _summarize(config: ExperimentConfig, seeds: Sequence[int], results: List[SeedResult],
               complete: bool) -> RunSummary:
    finals = [result.final_accuracy for result in results]
    mean = float(np.mean(finals)) if finals else 0.0
    std = float(np.std(finals, ddof=1)) if len(finals) >= 2 else 0.0
    return RunSummary(
        config_hash=config.config_hash(),
        strategy=config.fedct.strategy.value,
        seeds=list(seeds),
        target_accuracy=config.run.target_accuracy,
        final_accuracy_mean=mean,
        final_accuracy_std=std,
        per_seed=results,
        complete=complete,
    )


def _write_summary(summary: RunSummary, run_root: Path) -> Path:
    path = run_root / "summary.json"
    path.write_text(summary.model_dump_json(indent=2) + "\n")
    return path


def run_single(config: ExperimentConfig, seed: int, run_dir: Union[str, Path],
               show_progress: Optional[bool] = None) -> SeedResult:
    """
    One protocol run; writes metrics.csv, rounds.jsonl and config.resolved into ``run_dir``.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    resolved = config.to_dict()
    resolved["run"]["master_seed"] = seed
    (run_dir / "config.resolved").write_text(yaml.safe_dump(resolved, sort_keys=True))

    writer = MetricsWriter(run_dir)
    server = FederatedServer(config, master_seed=seed, run_dir=run_dir)
    history = server.run(on_round=writer.append, show_progress=show_progress)

    trajectory = [metrics.global_test_accuracy for metrics in history]
    if config.run.export_features:
        export_features(server.global_model.snapshot, server.test_set, run_dir / "features.csv")
    return SeedResult(
        seed=seed,
        final_accuracy=trajectory[-1] if trajectory else 0.0,
        rounds_to_target=rounds_to_target(trajectory, config.run.target_accuracy),
        accuracy_trajectory=trajectory,
    )


def run_experiment(config: ExperimentConfig, seeds: Sequence[int],
                   output_dir: Optional[Union[str, Path]] = None,
                   show_progress: Optional[bool] = None) -> RunSummary:
    """
    Run the protocol once per seed and summarize.

    A failing seed aborts the sweep; the summary of the finished seeds is
    written (``complete: false``) before the error propagates.

    Args:
        config: Validated configuration
        seeds: Master seeds, run in the given order
        output_dir: Overrides ``run.output_dir``
        show_progress: Overrides ``run.show_progress``

    Returns:
        RunSummary, also written to ``<output_dir>/<config-hash>/summary.json``

    Raises:
        InputError: If no seeds are given
    """
    seeds = [int(seed) for seed in seeds]
    if not seeds:
        raise InputError("run_experiment needs at least one seed")
    run_root = Path(output_dir if output_dir is not None else config.run.output_dir) / config.config_hash()
    run_root.mkdir(parents=True, exist_ok=True)
    logger.info(
        "Experiment started",
        extra={"context": {"config_hash": config.config_hash(), "seeds": seeds, "path": str(run_root)}},
    )

    results: List[SeedResult] = []
    for seed in seeds:
        try:
            results.append(run_single(config, seed, run_root / str(seed), show_progress))
        except Exception:
            _write_summary(_summarize(config, seeds, results, complete=False), run_root)
            logger.error("Seed failed, partial summary kept", extra={"context": {"seed": seed, "path": str(run_root)}})
            raise

    summary = _summarize(config, seeds, results, complete=True)
    _write_summary(summary, run_root)
    logger.info(
        "Experiment finished",
        extra={"context": {
            "config_hash": summary.config_hash,
            "final_accuracy_mean": summary.final_accuracy_mean,
            "final_accuracy_std": summary.final_accuracy_std,
            "rounds_to_target": summary.rounds_to_target,
        }},
    )
    return summary


def module_updates(row: str, base: ExperimentConfig) -> Dict[str, Any]:
    """
    Config updates for one row of the module ablation.

    base is FedAvg; +CAKB turns on consistency broadcasting with plain
    cross-training; +MFA enables the mixup term, +MVKGRL the contrastive term.
    Enabled weights keep the base config's value, or its default when zero.
    """
    if row not in MODULE_ROWS:
        raise InputError(f"Unknown module row {row!r}; expected one of {MODULE_ROWS}")
    defaults = LossWeights()
    kappa = base.fedct.kappa or defaults.kappa
    eta = base.fedct.eta or defaults.eta
    if row == "base":
        return {"fedct.strategy": "none", "fedct.kappa": 0.0, "fedct.eta": 0.0}
    return {
        "fedct.strategy": "consistency",
        "fedct.kappa": kappa if row in ("+CAKB+MVKGRL", "full") else 0.0,
        "fedct.eta": eta if row in ("+CAKB+MFA", "full") else 0.0,
    }


def axis_updates(axis: str, value: Any, base: ExperimentConfig) -> Dict[str, Any]:
    """
    Config updates for one ablation value.

    Raises:
        InputError: If the axis or the value is not valid for the axis
    """
    if axis == "strategy":
        try:
            return {"fedct.strategy": BroadcastStrategy(str(value)).value}
        except ValueError:
            raise InputError(f"Unknown strategy {value!r}") from None
    if axis == "lambda_fuse":
        return {"fedct.lambda_fuse": float(value)}
    if axis in ("N_e", "exchange_iterations"):
        return {"fedct.exchange_iterations": int(value)}
    if axis == "modules":
        return module_updates(str(value), base)
    raise InputError(f"Unknown ablation axis {axis!r}; expected one of {ABLATION_AXES}")


class AblationRow(BaseModel):
    axis: str
    value: str
    config_hash: str
    final_accuracy_mean: float
    final_accuracy_std: float
    mean_rounds_to_target: Optional[float] = None
    seeds_reaching_target: int = 0


class AblationTable(BaseModel):
    """One row per ablation value."""
    axis: str
    rows: List[AblationRow] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=list(AblationRow.model_fields))

    def to_text(self) -> str:
        frame = self.to_frame()
        if frame.empty:
            return f"(no rows for axis {self.axis})"
        shown = pd.DataFrame({
            self.axis: frame["value"],
            "accuracy": [
                f"{m * 100:.2f} ± {s * 100:.2f}"
                for m, s in zip(frame["final_accuracy_mean"], frame["final_accuracy_std"])
            ],
            "rounds_to_target": [
                "not reached" if pd.isna(r) else f"{r:.1f}" for r in frame["mean_rounds_to_target"]
            ],
        })
        return shown.to_string(index=False)


def run_ablation(base: ExperimentConfig, axis: str, values: Sequence[Any], seeds: Sequence[int],
                 output_dir: Optional[Union[str, Path]] = None,
                 show_progress: Optional[bool] = None) -> AblationTable:
    """
    Run ``run_experiment`` for each value of one axis.

    Writes ``ablation_<axis>.csv`` and ``ablation_<axis>.txt`` under the output directory.

    Args:
        base: Config every value is applied to
        axis: "strategy", "lambda_fuse", "N_e" or "modules"
        values: Axis values, in table order
        seeds: Seeds shared by every value
        output_dir: Overrides ``run.output_dir``
        show_progress: Overrides ``run.show_progress``

    Returns:
        AblationTable

    Raises:
        InputError: On an unknown axis, an invalid value or an empty value list
        ConfigError: If a value gives an invalid config
    """
    if not values:
        raise InputError("run_ablation needs at least one axis value")
    # validate every value before running anything
    configs = [(value, with_updates(base, axis_updates(axis, value, base))) for value in values]

    root = Path(output_dir if output_dir is not None else base.run.output_dir)
    table = AblationTable(axis=axis)
    for value, config in configs:
        logger.info("Ablation value", extra={"context": {"axis": axis, "value": str(value)}})
        summary = run_experiment(config, seeds, output_dir=root, show_progress=show_progress)
        table.rows.append(AblationRow(
            axis=axis,
            value=str(value),
            config_hash=summary.config_hash,
            final_accuracy_mean=summary.final_accuracy_mean,
            final_accuracy_std=summary.final_accuracy_std,
            mean_rounds_to_target=summary.mean_rounds_to_target,
            seeds_reaching_target=sum(1 for r in summary.per_seed if r.rounds_to_target is not None),
        ))

    root.mkdir(parents=True, exist_ok=True)
    table.to_frame().to_csv(root / f"ablation_{axis}.csv", index=False)
    (root / f"ablation_{axis}.txt").write_text(table.to_text() + "\n")
    return table
