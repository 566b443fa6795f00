# pylint: disable=missing-docstring

import csv
import logging
import os
import tempfile
import unittest

import numpy as np

from fmpinn.exceptions import ConfigurationError
from fmpinn.loss import LossBreakdown
from fmpinn.reporting import (
    RUN_COLUMNS,
    SWEEP_COLUMNS,
    PointwiseError,
    RunRecord,
    read_run_csv,
    read_summary,
    sweep_row,
    write_pointwise_csv,
    write_run_artifacts,
    write_sweep_csv,
)

# Set up logging
logger = logging.getLogger("fmpinn")
logger.setLevel(logging.DEBUG)


def breakdown(total=37.0, gamma=10.0):
    return LossBreakdown(2.0, 3.0, 0.5, gamma=gamma, beta=10.0, total=total)


def sample_record():
    record = RunRecord(problem="ex1_eps0.1", method="fmpinn", seed=3, config_hash="abc")
    record.add_row(1000, 0.01 * 0.975**9, breakdown(), 0.1)
    record.add_row(2000, 0.01 * 0.975**19, breakdown(total=1.0 / 3.0, gamma=100.0), 0.03)
    return record


class TestRunRecord(unittest.TestCase):
    def test_rows(self):
        record = sample_record()
        self.assertEqual(record.eval_epochs, [1000, 2000])
        self.assertEqual(record.final_rel, 0.03)
        self.assertEqual(list(record.rows[0]), list(RUN_COLUMNS))
        self.assertEqual(record.rows[1]["gamma"], 100.0)

    def test_epochs_must_increase(self):
        record = sample_record()
        with self.assertRaises(ConfigurationError):
            record.add_row(2000, 0.001, breakdown(), 0.01)
        self.assertEqual(len(record.rows), 2)

    def test_empty_record(self):
        record = RunRecord(problem="ex4", method="mpinn", seed=0)
        self.assertIsNone(record.final_rel)
        self.assertEqual(record.summary()["evaluations"], 0)

    def test_summary(self):
        record = sample_record()
        record.status = "ok"
        summary = record.summary()
        self.assertEqual(summary["problem"], "ex1_eps0.1")
        self.assertEqual(summary["config_hash"], "abc")
        self.assertEqual(summary["final_rel"], 0.03)
        self.assertEqual(summary["evaluations"], 2)
        self.assertEqual(summary["status"], "ok")


class TestArtifacts(unittest.TestCase):
    def test_run_csv_reads_back_exactly(self):
        record = sample_record()
        with tempfile.TemporaryDirectory() as directory:
            manifest = write_run_artifacts(directory, record)
            rows = read_run_csv(manifest["run_csv"])
            summary = read_summary(manifest["summary"])
            self.assertNotIn("pointwise_csv", manifest)
        self.assertEqual(rows, record.rows)
        self.assertEqual(summary["artifacts"], manifest)
        self.assertEqual(set(manifest), {"run_csv", "summary"})

    def test_identical_records_give_identical_files(self):
        contents = []
        for _ in range(2):
            with tempfile.TemporaryDirectory() as directory:
                manifest = write_run_artifacts(directory, sample_record())
                with open(manifest["run_csv"], "rb") as f:
                    contents.append(f.read())
        self.assertEqual(contents[0], contents[1])

    def test_pointwise_csv(self):
        record = sample_record()
        points = np.array([[0.0], [0.5], [1.0]])
        prediction = np.array([0.0, 0.26, 0.0])
        reference = np.array([0.0, 0.25, 0.0])
        record.pointwise = PointwiseError(
            points, prediction, reference, np.abs(prediction - reference)
        )
        with tempfile.TemporaryDirectory() as directory:
            manifest = write_run_artifacts(directory, record)
            with open(manifest["pointwise_csv"], newline="", encoding="utf-8") as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["x1", "prediction", "reference", "error"])
        self.assertEqual(len(rows), 4)
        self.assertEqual(rows[2][:3], ["0.5", "0.26", "0.25"])
        self.assertAlmostEqual(float(rows[2][3]), 0.01, places=15)

    def test_pointwise_requires_data(self):
        with tempfile.TemporaryDirectory() as directory:
            with self.assertRaises(ConfigurationError):
                write_pointwise_csv(os.path.join(directory, "p.csv"), sample_record())


class TestSweep(unittest.TestCase):
    def test_rows(self):
        record = sample_record()
        record.status = "ok"
        record.wall_time = 1.5
        ok = sweep_row("beta", 20, record)
        self.assertEqual(ok["status"], "ok")
        self.assertEqual(ok["final_rel"], 0.03)
        self.assertEqual(ok["error"], "")
        failed = sweep_row("epsilon", 0.01, error=ValueError("diverged"), problem="ex1_eps0.01")
        self.assertEqual(failed["status"], "failed")
        self.assertEqual(failed["problem"], "ex1_eps0.01")
        self.assertEqual(failed["error"], "diverged")
        self.assertIsNone(failed["final_rel"])

    def test_csv(self):
        record = sample_record()
        record.status = "ok"
        rows = [
            sweep_row("method", "fmpinn", record),
            sweep_row("method", "mpinn", error="non-finite loss", method="mpinn"),
        ]
        with tempfile.TemporaryDirectory() as directory:
            path = write_sweep_csv(os.path.join(directory, "sweep.csv"), rows)
            with open(path, newline="", encoding="utf-8") as f:
                table = list(csv.reader(f))
        self.assertEqual(table[0], list(SWEEP_COLUMNS))
        self.assertEqual(table[1][:5], ["method", "fmpinn", "ex1_eps0.1", "fmpinn", "0.03"])
        self.assertEqual(table[2][3:], ["mpinn", "", "", "failed", "non-finite loss"])


if __name__ == "__main__":
    unittest.main()
