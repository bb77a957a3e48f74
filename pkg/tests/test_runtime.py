import io
import json
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from fedct_sim.losses import LossWeights
from fedct_sim.runtime import (
    ExperimentConfig,
    SeedResult,
    apply_overrides,
    axis_updates,
    module_updates,
    parse_config,
    run_ablation,
    run_experiment,
    run_grad_suite,
    with_updates,
)
from fedct_sim.runtime.cli import main, parse_seeds, parse_values
from fedct_sim.utils.errors import ConfigError, InputError, TrainingDivergedError

TINY_YAML = """
data: {num_classes: 3, per_class: 30, dim: 5, separation: 3.0}
partition: {num_clients: 3, beta: 1.0, min_samples: 8}
model: {hidden: [6], feature_dim: 4}
train: {rounds: 2, local_epochs: 1, cross_epochs: 1, batch_size: 16, lr: 0.05}
fedct: {strategy: consistency}
run: {target_accuracy: 0.5}
"""


def tiny_config(*overrides: str) -> ExperimentConfig:
    return parse_config(TINY_YAML, overrides=overrides)


class TestConfig(unittest.TestCase):
    """Test cases for config parsing and validation."""

    def test_defaults(self):
        """Test that an empty document gives the documented defaults."""
        config = parse_config()
        self.assertEqual(config, ExperimentConfig())
        self.assertEqual(config.fedct.strategy.value, "consistency")
        self.assertEqual(config.fedct.exchange_iterations, 1)
        self.assertEqual(config.partition.num_clients, 10)
        self.assertEqual(config.architecture().input_dim, config.data.dim)
        self.assertEqual(config.loss_weights(), LossWeights())
        self.assertEqual((config.fedct.tau2, config.fedct.eta), (0.05, 0.1))

    def test_out_of_range_value(self):
        """Test that a negative beta names its key path."""
        with self.assertRaises(ConfigError) as ctx:
            parse_config("partition:\n  beta: -1\n")
        self.assertEqual(ctx.exception.key_path, "partition.beta")

    def test_unknown_keys(self):
        """Test rejection of unknown keys and sections."""
        with self.assertRaises(ConfigError) as ctx:
            parse_config("fedct:\n  gamma: 1.0\n")
        self.assertEqual(ctx.exception.key_path, "fedct.gamma")
        with self.assertRaises(ConfigError):
            parse_config("optimizer:\n  lr: 0.1\n")

    def test_bad_documents(self):
        """Test YAML syntax errors, non-mappings and missing files."""
        with self.assertRaises(ConfigError):
            parse_config("fedct: [unclosed\n")
        with self.assertRaises(ConfigError):
            parse_config("- 1\n- 2\n")
        with self.assertRaises(ConfigError):
            parse_config("does/not/exist.yaml")

    def test_exchange_alias(self):
        """Test the short N_e spelling."""
        self.assertEqual(parse_config("fedct:\n  N_e: 3\n").fedct.exchange_iterations, 3)

    def test_single_participant_needs_none(self):
        """Test that exchange strategies need two participants per round."""
        with self.assertRaises(ConfigError):
            parse_config(overrides=["partition.num_clients=2", "train.client_fraction=0.5"])
        config = parse_config(overrides=[
            "partition.num_clients=2", "train.client_fraction=0.5", "fedct.strategy=none",
        ])
        self.assertEqual(config.fedct.strategy.value, "none")

    def test_dump_round_trip(self):
        """Test that the resolved dump parses back to the same config."""
        config = tiny_config("fedct.kappa=0.25", "model.hidden=[7, 5]")
        self.assertEqual(parse_config(config.dump()), config)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.yaml"
            path.write_text(config.dump())
            self.assertEqual(parse_config(path), config)
            self.assertEqual(parse_config(str(path)), config)

    def test_config_hash(self):
        """Test hash stability and the excluded keys."""
        config = tiny_config()
        self.assertEqual(len(config.config_hash()), 12)
        self.assertEqual(config.config_hash(), tiny_config().config_hash())
        self.assertEqual(
            config.config_hash(), tiny_config("run.master_seed=9", "run.output_dir=elsewhere").config_hash()
        )
        self.assertNotEqual(config.config_hash(), tiny_config("fedct.kappa=0.5").config_hash())

    def test_overrides(self):
        """Test override parsing and typed updates."""
        config = apply_overrides(tiny_config(), ["fedct.strategy=random", "train.rounds=5"])
        self.assertEqual(config.fedct.strategy.value, "random")
        self.assertEqual(config.train.rounds, 5)
        self.assertEqual(with_updates(config, {"fedct.kappa": 0.0}).fedct.kappa, 0.0)
        for bad in ("fedct.kappa", "kappa=1", "a.b.c=1"):
            with self.assertRaises(ConfigError):
                tiny_config(bad)
        with self.assertRaises(ConfigError):
            with_updates(config, {"kappa": 1.0})


class TestExperiment(unittest.TestCase):
    """Test cases for seed sweeps and summaries."""

    def test_output_tree(self):
        """Test the files written for one seed."""
        config = tiny_config()
        with tempfile.TemporaryDirectory() as tmp:
            summary = run_experiment(config, [0], output_dir=tmp)
            run_root = Path(tmp) / config.config_hash()
            frame = pd.read_csv(run_root / "0" / "metrics.csv")
            resolved = parse_config(run_root / "0" / "config.resolved")
            document = json.loads((run_root / "summary.json").read_text())
            jsonl_lines = (run_root / "0" / "rounds.jsonl").read_text().splitlines()
        self.assertEqual(len(frame), 2)
        self.assertEqual(len(jsonl_lines), 2)
        self.assertEqual(resolved.config_hash(), config.config_hash())
        self.assertTrue(document["complete"])
        self.assertEqual(document["seeds"], [0])
        self.assertAlmostEqual(summary.final_accuracy_mean, frame["global_acc"].iloc[-1])
        self.assertEqual(summary.final_accuracy_std, 0.0)

    def test_same_seeds_same_summary(self):
        """Test that two sweeps over the same seeds agree exactly."""
        config = tiny_config("train.rounds=1")
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            a = run_experiment(config, [0, 1, 2], output_dir=first)
            b = run_experiment(config, [0, 1, 2], output_dir=second)
        self.assertEqual(a.per_seed, b.per_seed)
        finals = [result.final_accuracy for result in a.per_seed]
        self.assertAlmostEqual(a.final_accuracy_std, float(np.std(finals, ddof=1)), places=12)

    def test_failed_seed_keeps_partial_summary(self):
        """Test that finished seeds are summarized before the error propagates."""
        config = tiny_config()
        finished = SeedResult(seed=0, final_accuracy=0.7, rounds_to_target=1, accuracy_trajectory=[0.7])
        with tempfile.TemporaryDirectory() as tmp:
            with patch("fedct_sim.runtime.experiment.run_single") as mock_run:
                mock_run.side_effect = [finished, TrainingDivergedError(1, "phase1", 3, "nan")]
                with self.assertRaises(TrainingDivergedError):
                    run_experiment(config, [0, 1], output_dir=tmp)
            document = json.loads((Path(tmp) / config.config_hash() / "summary.json").read_text())
        self.assertFalse(document["complete"])
        self.assertEqual(len(document["per_seed"]), 1)

    def test_no_seeds(self):
        """Test the empty seed list."""
        with self.assertRaises(InputError):
            run_experiment(tiny_config(), [])


class TestAblation(unittest.TestCase):
    """Test cases for ablation sweeps."""

    def test_strategy_axis(self):
        """Test one row per strategy and the written tables."""
        config = tiny_config("train.rounds=1")
        with tempfile.TemporaryDirectory() as tmp:
            table = run_ablation(config, "strategy", ["consistency", "random", "none"], [0], output_dir=tmp)
            frame = pd.read_csv(Path(tmp) / "ablation_strategy.csv")
            text = (Path(tmp) / "ablation_strategy.txt").read_text()
        self.assertEqual([row.value for row in table.rows], ["consistency", "random", "none"])
        self.assertEqual(len(frame), 3)
        self.assertEqual(len({row.config_hash for row in table.rows}), 3)
        self.assertIn("random", text)

    def test_invalid_value_runs_nothing(self):
        """Test that every value is validated before the first run."""
        with patch("fedct_sim.runtime.experiment.run_experiment") as mock_run:
            with self.assertRaises(InputError):
                run_ablation(tiny_config(), "strategy", ["consistency", "sideways"], [0])
            with self.assertRaises(ConfigError):
                run_ablation(tiny_config(), "lambda_fuse", [0.5, 2.0], [0])
            mock_run.assert_not_called()

    def test_axis_updates(self):
        """Test update mapping of every axis."""
        base = tiny_config()
        self.assertEqual(axis_updates("N_e", 3, base), {"fedct.exchange_iterations": 3})
        self.assertEqual(axis_updates("lambda_fuse", "0.25", base), {"fedct.lambda_fuse": 0.25})
        with self.assertRaises(InputError):
            axis_updates("temperature", 1, base)

    def test_module_rows(self):
        """Test the module ablation ladder."""
        base = tiny_config("fedct.kappa=2.0")
        self.assertEqual(module_updates("base", base)["fedct.strategy"], "none")
        self.assertEqual(module_updates("+CAKB", base), {
            "fedct.strategy": "consistency", "fedct.kappa": 0.0, "fedct.eta": 0.0,
        })
        self.assertEqual(module_updates("+CAKB+MVKGRL", base)["fedct.kappa"], 2.0)
        self.assertEqual(module_updates("+CAKB+MFA", base)["fedct.eta"], 0.1)
        full = module_updates("full", with_updates(base, {"fedct.eta": 0.0}))
        self.assertEqual((full["fedct.kappa"], full["fedct.eta"]), (2.0, LossWeights().eta))
        with self.assertRaises(InputError):
            module_updates("+XYZ", base)


class TestCli(unittest.TestCase):
    """Test cases for the command-line entry point."""

    def test_check(self):
        """Test printing a resolved config."""
        with patch("sys.stdout", new_callable=io.StringIO) as out:
            code = main(["check", "--override", "train.rounds=2"])
        self.assertEqual(code, 0)
        lines = out.getvalue().splitlines()
        self.assertTrue(lines[0].startswith("# config hash "))
        self.assertEqual(parse_config("\n".join(lines[1:])).train.rounds, 2)

    def test_invalid_config_exit_code(self):
        """Test that config errors exit with status 1."""
        with patch("sys.stdout", new_callable=io.StringIO):
            self.assertEqual(main(["check", "--override", "partition.beta=-1"]), 1)
            self.assertEqual(main(["run", "--config", "missing.yaml"]), 1)

    def test_run(self):
        """Test a full run through the CLI."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "tiny.yaml"
            path.write_text(TINY_YAML)
            with patch("sys.stdout", new_callable=io.StringIO) as out:
                code = main(["run", "--config", str(path), "--seeds", "0", "--out", tmp, "--override", "train.rounds=1"])
            summary = json.loads(out.getvalue())
            self.assertTrue((Path(tmp) / summary["config_hash"] / "summary.json").exists())
        self.assertEqual(code, 0)
        self.assertEqual(summary["seeds"], [0])

    def test_parse_helpers(self):
        """Test seed and value list parsing."""
        config = tiny_config("run.master_seed=4")
        self.assertEqual(parse_seeds(None, config), [4])
        self.assertEqual(parse_seeds("0, 1,2", config), [0, 1, 2])
        for bad in ("a", "-1", ","):
            with self.assertRaises(ConfigError):
                parse_seeds(bad, config)
        self.assertEqual(parse_values("consistency,0.5,3"), ["consistency", 0.5, 3])

    def test_grad_check_seed_count(self):
        """Test that grad-check takes a fixture count through --num-seeds."""
        with patch("sys.stdout", new_callable=io.StringIO) as out:
            code = main(["grad-check", "--num-seeds", "1"])
        self.assertEqual(code, 0)
        self.assertTrue(out.getvalue().startswith("5 cases,"))
        with patch("sys.stderr", new_callable=io.StringIO), self.assertRaises(SystemExit):
            main(["grad-check", "--seeds", "1"])


class TestGradSuite(unittest.TestCase):
    """Test cases for the finite-difference suite."""

    def test_suite_passes(self):
        """Test the suite over twenty seeds."""
        report = run_grad_suite(num_seeds=20)
        self.assertEqual(len(report.cases), 20 * 5)
        self.assertTrue(report.passed, report.worst)


if __name__ == "__main__":
    unittest.main()
