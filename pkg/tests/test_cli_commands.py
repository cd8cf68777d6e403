"""
This file tests the command-line interface and its exit codes.
"""

import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import pandas as pd

from amdslab.cli import main
from amdslab.exceptions import GateError
from amdslab.pipeline import RunLayout, SystemManifest

CONFIG = "./testcase_data/tiny.yaml"


def run_cli(argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
        code = main(argv)
    return code, stdout.getvalue(), stderr.getvalue()


class TestCliErrors(unittest.TestCase):
    """
    Test the exit codes of failing commands.
    Test cases:
    - test_missing_config: A missing config file exits with 2 and a JSON error.
    - test_invalid_config: An unknown config key exits with 2.
    - test_missing_manifest: Evaluating an untrained run exits with 3.
    - test_gate_failure: A hard training failure exits with 4.
    - test_report_without_tables: Rendering a report without tables exits with 3.
    """

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_missing_config(self):
        code, _, stderr = run_cli(["train", "--config", os.path.join(self.temp_dir, "absent.yaml")])
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(stderr.strip().splitlines()[-1])["exit_code"], 2)

    def test_invalid_config(self):
        path = os.path.join(self.temp_dir, "bad.yaml")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("attacks:\n  strength: 3\n")
        code, _, _ = run_cli(["train", "--config", path])
        self.assertEqual(code, 2)

    def test_missing_manifest(self):
        code, _, stderr = run_cli(["evaluate", "--config", CONFIG, "--output", self.temp_dir])
        self.assertEqual(code, 3)
        self.assertIn("ManifestError", stderr)

    def test_gate_failure(self):
        with patch("amdslab.cli.build_system", side_effect=GateError("mlp could not be fitted")):
            code, _, stderr = run_cli(["train", "--config", CONFIG, "--output", self.temp_dir])
        self.assertEqual(code, 4)
        self.assertIn("GateError", stderr)

    def test_report_without_tables(self):
        code, _, _ = run_cli(["report", "--config", CONFIG, "--output", self.temp_dir])
        self.assertEqual(code, 3)


class TestCliWorkflow(unittest.TestCase):
    """
    Test the train, attack, infer and ablate commands on a small run.
    Test cases:
    - test_train_writes_manifest: Training exits with 0 and writes a loadable manifest.
    - test_infer_rows: Inference prints one JSON record per input row.
    - test_infer_empty_file: A CSV with only a header gives no output and exits with 0.
    - test_infer_to_file: Inference writes JSON lines to the --out file.
    - test_commands_need_attacks: Evaluation and ablation before the attack command exit with 3
        and name the missing batches; ablation after it exits with 0.
    """

    @classmethod
    def setUpClass(cls):
        cls.run_dir = tempfile.mkdtemp()
        cls.common = ["--config", CONFIG, "--output", cls.run_dir]
        cls.train_code, _, _ = run_cli(["train", *cls.common])
        cls.layout = RunLayout(cls.run_dir)
        schema = SystemManifest.load(cls.layout.manifest).scaler.input_schema
        rng = np.random.default_rng(0)
        cls.rows_path = os.path.join(cls.run_dir, "flows.csv")
        frame = pd.DataFrame(rng.standard_normal((5, len(schema))), columns=schema)
        frame["label"] = 0
        frame.to_csv(cls.rows_path, index=False)
        cls.empty_path = os.path.join(cls.run_dir, "empty.csv")
        pd.DataFrame(columns=schema).to_csv(cls.empty_path, index=False)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.run_dir, ignore_errors=True)

    def test_train_writes_manifest(self):
        self.assertEqual(self.train_code, 0)
        self.assertEqual(len(SystemManifest.load(self.layout.manifest).models), 6)

    def test_infer_rows(self):
        code, stdout, _ = run_cli(["infer", *self.common, "--input", self.rows_path])
        self.assertEqual(code, 0)
        records = [json.loads(line) for line in stdout.splitlines()]
        self.assertEqual(len(records), 5)
        self.assertEqual(
            set(records[0]), {"y_detect", "y_class", "conf_detect", "conf_class", "category", "stage"}
        )

    def test_infer_empty_file(self):
        code, stdout, _ = run_cli(["infer", *self.common, "--input", self.empty_path])
        self.assertEqual(code, 0)
        self.assertEqual(stdout, "")

    def test_infer_to_file(self):
        out_path = os.path.join(self.run_dir, "predictions.jsonl")
        code, _, _ = run_cli(["infer", *self.common, "--input", self.rows_path, "--out", out_path])
        self.assertEqual(code, 0)
        with open(out_path, "r", encoding="utf-8") as handle:
            self.assertEqual(len(handle.readlines()), 5)

    def test_commands_need_attacks(self):
        code, _, stderr = run_cli(["evaluate", *self.common])
        self.assertEqual(code, 3)
        self.assertIn("Missing attack batches", stderr)
        self.assertIn("morphing", stderr)
        self.assertEqual(run_cli(["ablate", *self.common])[0], 3)
        self.assertEqual(run_cli(["attack", *self.common])[0], 0)
        self.assertEqual(run_cli(["ablate", *self.common])[0], 0)
        self.assertTrue(os.path.isfile(os.path.join(self.layout.reports, "table5_ablation.json")))


if __name__ == "__main__":
    unittest.main(verbosity=2)
