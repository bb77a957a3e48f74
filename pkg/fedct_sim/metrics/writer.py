"""
Per-run metric files: ``metrics.csv`` (one row per round, fixed column order)
and ``rounds.jsonl`` (full nested RoundMetrics records).
"""

import json
from pathlib import Path
from typing import Dict, List, Union

import pandas as pd

from .evaluation import CSV_COLUMNS, RoundMetrics


class MetricsWriter:
    """
    Accumulates round records and keeps the run's metric files current.
    """

    def __init__(self, run_dir: Union[str, Path], write_jsonl: bool = True):
        """
        Initialize the writer, truncating any previous files in ``run_dir``.

        Args:
            run_dir: Directory of one (config, seed) run
            write_jsonl: Also write the JSON-lines stream
        """
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.csv_path = self.run_dir / "metrics.csv"
        self.jsonl_path = self.run_dir / "rounds.jsonl"
        self.write_jsonl = write_jsonl
        self.rows: List[Dict[str, object]] = []

        if self.write_jsonl:
            self.jsonl_path.write_text("")

    def append(self, metrics: RoundMetrics) -> None:
        """Record one round and rewrite the CSV."""
        self.rows.append(metrics.csv_row())
        pd.DataFrame(self.rows, columns=CSV_COLUMNS).to_csv(self.csv_path, index=False)

        if self.write_jsonl:
            with open(self.jsonl_path, "a") as f:
                f.write(json.dumps(metrics.model_dump(mode="json"), sort_keys=True) + "\n")

    @staticmethod
    def load_csv(path: Union[str, Path]) -> pd.DataFrame:
        return pd.read_csv(path)

    @staticmethod
    def load_jsonl(path: Union[str, Path]) -> List[RoundMetrics]:
        """Read back the records written by ``append``."""
        records = []
        with open(path, "r") as f:
            for line in f:
                if line.strip():
                    records.append(RoundMetrics.model_validate(json.loads(line)))
        return records
