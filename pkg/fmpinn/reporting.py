"""Run records and the artifact files written from them.

All numbers are written with `repr(float)`, the shortest text that reads back
to the same double, so two runs with the same seed produce byte-identical
CSV files.
"""

import csv
import json
import logging
import os
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError

logger = logging.getLogger("fmpinn")

RUN_COLUMNS = ("epoch", "lr", "gamma", "pde", "flux", "boundary", "total", "rel")
SWEEP_COLUMNS = ("axis", "value", "problem", "method", "final_rel", "wall_time", "status", "error")

PointwiseError = namedtuple("PointwiseError", ["points", "prediction", "reference", "error"])
"""Final prediction, reference and |prediction - reference| per test point."""


def _number(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


@dataclass
class RunRecord:
    """History and outcome of one training run.

    Attributes:
        problem (str): Problem name.
        method (str): 'fmpinn' or 'mpinn'.
        seed (int): Seed of the run.
        config_hash (str): Hash of the experiment configuration.
        rows (list of dict): One row per evaluation, keys RUN_COLUMNS.
        wall_time (float): Seconds spent in the training loop.
        parameter_count (int): Number of trainable scalars.
        lambda_min (float): Smallest probed coefficient value.
        lambda_max (float): Largest probed coefficient value.
        reference_source (str): 'exact' or a description of the reference grid.
        status (str): 'ok', 'running' or 'aborted'.
        config (dict): Echo of the full experiment configuration.
        artifacts (dict): Artifact name -> file path.
        pointwise (PointwiseError): Final pointwise errors, if evaluated.
    """

    problem: str
    method: str
    seed: int
    config_hash: str = ""
    rows: List[dict] = field(default_factory=list)
    wall_time: float = 0.0
    parameter_count: int = 0
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    reference_source: str = ""
    status: str = "running"
    config: Dict = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    pointwise: Optional[PointwiseError] = field(default=None, repr=False, compare=False)

    @property
    def final_rel(self) -> Optional[float]:
        """REL of the last evaluation row."""
        return self.rows[-1]["rel"] if self.rows else None

    @property
    def eval_epochs(self) -> List[int]:
        return [row["epoch"] for row in self.rows]

    def add_row(self, epoch: int, lr: float, breakdown, rel: float) -> dict:
        """Append an evaluation row.

        Args:
            epoch (int): Number of completed epochs.
            lr (float): Learning rate of the last update.
            breakdown (LossBreakdown): Loss parts of the last update.
            rel (float): Relative l2 error on the test set.

        Raises:
            ConfigurationError: If epoch does not increase.
        """
        if self.rows and epoch <= self.rows[-1]["epoch"]:
            raise ConfigurationError(
                f"Evaluation epochs must increase, got {epoch} after {self.rows[-1]['epoch']}"
            )
        row = {"epoch": int(epoch), "lr": float(lr), **breakdown.as_row(), "rel": float(rel)}
        row = {column: row[column] for column in RUN_COLUMNS}
        self.rows.append(row)
        logger.info(
            "epoch %s: lr=%.6g gamma=%s total=%.6e rel=%.6e",
            row["epoch"],
            row["lr"],
            row["gamma"],
            row["total"],
            row["rel"],
        )
        return row

    def summary(self) -> dict:
        """JSON-ready summary, including the artifact manifest and config echo."""
        return {
            "problem": self.problem,
            "method": self.method,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "status": self.status,
            "final_rel": self.final_rel,
            "wall_time": self.wall_time,
            "parameter_count": self.parameter_count,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "reference": self.reference_source,
            "evaluations": len(self.rows),
            "artifacts": dict(self.artifacts),
            "config": self.config,
        }


def write_run_csv(path: str, record: RunRecord) -> str:
    """Write the evaluation rows of a run, one line per evaluation."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for row in record.rows:
            writer.writerow([_number(row[column]) for column in RUN_COLUMNS])
    record.artifacts["run_csv"] = path
    return path


def read_run_csv(path: str) -> List[dict]:
    """Rows of a run CSV, numbers parsed."""
    with open(path, "r", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return [
        {key: int(value) if key == "epoch" else float(value) for key, value in row.items()}
        for row in rows
    ]


def write_pointwise_csv(path: str, record: RunRecord) -> str:
    """Write coordinates, prediction, reference and |error| of the final evaluation."""
    if record.pointwise is None:
        raise ConfigurationError("The run has no pointwise error field")
    points, prediction, reference, error = record.pointwise
    dim = points.shape[-1]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"x{k + 1}" for k in range(dim)] + ["prediction", "reference", "error"])
        for point, u, ref, err in zip(points, prediction, reference, error):
            writer.writerow([_number(c) for c in point] + [_number(u), _number(ref), _number(err)])
    record.artifacts["pointwise_csv"] = path
    return path


def write_summary(path: str, record: RunRecord) -> str:
    """Write the run summary as JSON; the summary lists itself in the manifest."""
    record.artifacts["summary"] = path
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record.summary(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("Summary written to %s", path)
    return path


def read_summary(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_run_artifacts(output_dir: str, record: RunRecord) -> dict:
    """Write run.csv, the pointwise field (when available) and summary.json.

    Returns:
        dict: The artifact manifest.
    """
    os.makedirs(output_dir, exist_ok=True)
    write_run_csv(os.path.join(output_dir, "run.csv"), record)
    if record.pointwise is not None:
        write_pointwise_csv(os.path.join(output_dir, "pointwise.csv"), record)
    write_summary(os.path.join(output_dir, "summary.json"), record)
    return dict(record.artifacts)


def sweep_row(axis: str, value, record: Optional[RunRecord] = None, error=None, **extra) -> dict:
    """One row of a sweep table; failed runs carry the error message."""
    row = {
        "axis": axis,
        "value": value,
        "problem": extra.get("problem", record.problem if record else ""),
        "method": extra.get("method", record.method if record else ""),
        "final_rel": record.final_rel if record else None,
        "wall_time": record.wall_time if record else None,
        "status": "failed" if error is not None else (record.status if record else "failed"),
        "error": str(error) if error is not None else "",
    }
    return row


def _cell(column, value):
    if value is None:
        return ""
    if column in ("final_rel", "wall_time"):
        return _number(value)
    return value


def write_sweep_csv(path: str, rows: Sequence[dict]) -> str:
    """Write a comparison table, one row per swept value."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_cell(column, row[column]) for column in SWEEP_COLUMNS])
    logger.info("Sweep table with %s rows written to %s", len(rows), path)
    return path
