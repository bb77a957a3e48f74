"""
Command-line entry point: ``fedct-sim run|ablate|check|grad-check``.
"""

import argparse
import sys
from typing import List, Optional, Sequence

import yaml

from .config import ExperimentConfig, parse_config
from .experiment import ABLATION_AXES, run_ablation, run_experiment
from .grad_suite import DEFAULT_TOLERANCE, run_grad_suite
from ..utils.errors import ConfigError, SimulatorError
from ..utils.logger import configure_logging, get_logger

logger = get_logger("runtime.cli")


def parse_seeds(raw: Optional[str], config: ExperimentConfig) -> List[int]:
    """``"0,1,2"`` -> [0, 1, 2]; defaults to ``run.master_seed``."""
    if raw is None or not raw.strip():
        return [config.run.master_seed]
    seeds = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            seed = int(part)
        except ValueError:
            raise ConfigError("--seeds", f"not an integer: {part!r}") from None
        if seed < 0:
            raise ConfigError("--seeds", f"seeds must be non-negative, got {seed}")
        seeds.append(seed)
    if not seeds:
        raise ConfigError("--seeds", "no seeds given")
    return seeds


def parse_values(raw: str) -> List[object]:
    """Comma-separated axis values, each read as a YAML scalar."""
    values = []
    for part in raw.split(","):
        part = part.strip()
        if part:
            values.append(yaml.safe_load(part))
    return values


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file (defaults are used when omitted)")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one config value (repeatable)",
    )


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seeds", help="Comma-separated master seeds, e.g. 0,1,2")
    parser.add_argument("--out", help="Output directory (overrides run.output_dir)")
    parser.add_argument("--progress", action="store_true", help="Show a progress bar per seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedct-sim",
        description="Deterministic simulator for federated cross-training with consistency-aware broadcasting.",
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-json", action="store_true", help="Log one JSON object per line")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one config over one or more seeds")
    _add_common(run)
    _add_run_options(run)

    ablate = commands.add_parser("ablate", help="Sweep one axis and tabulate the results")
    _add_common(ablate)
    _add_run_options(ablate)
    ablate.add_argument("--axis", required=True, choices=list(ABLATION_AXES))
    ablate.add_argument("--values", required=True, help="Comma-separated axis values")

    check = commands.add_parser("check", help="Validate a config and print it resolved")
    _add_common(check)

    grad = commands.add_parser("grad-check", help="Run the finite-difference gradient suite")
    grad.add_argument("--num-seeds", type=int, default=20, help="Number of random fixtures")
    grad.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    return parse_config(args.config, overrides=args.override)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    summary = run_experiment(config, parse_seeds(args.seeds, config), output_dir=args.out,
                             show_progress=args.progress or None)
    print(summary.model_dump_json(indent=2))
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _load(args)
    table = run_ablation(
        config,
        args.axis,
        parse_values(args.values),
        parse_seeds(args.seeds, config),
        output_dir=args.out,
        show_progress=args.progress or None,
    )
    print(table.to_text())
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    config = _load(args)
    print(f"# config hash {config.config_hash()}")
    print(config.dump(), end="")
    return 0


def _cmd_grad_check(args: argparse.Namespace) -> int:
    report = run_grad_suite(num_seeds=args.num_seeds, tolerance=args.tolerance)
    print(f"{len(report.cases)} cases, worst relative error {report.worst:.3e} (tolerance {report.tolerance:.0e})")
    if not report.passed:
        for case in report.cases:
            if case.max_relative_error >= report.tolerance:
                print(f"  FAIL seed={case.seed} {case.objective}: {case.max_relative_error:.3e}")
        return 1
    return 0


COMMANDS = {
    "run": _cmd_run,
    "ablate": _cmd_ablate,
    "check": _cmd_check,
    "grad-check": _cmd_grad_check,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, json_lines=args.log_json)
    try:
        return COMMANDS[args.command](args)
    except (SimulatorError, OSError) as exc:
        logger.error(str(exc), extra={"context": {"command": args.command, "error": type(exc).__name__}})
        return 1


if __name__ == "__main__":
    sys.exit(main())
