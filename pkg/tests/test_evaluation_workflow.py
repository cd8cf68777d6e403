"""
This file tests the evaluation workflow: the test attack suite and every report table.
"""

import os
import shutil
import tempfile
import unittest

import numpy as np

from amdslab.config import load_config
from amdslab.evaluation import (
    EvaluationContext,
    build_test_suite,
    load_test_suite,
    run_evaluation,
    save_test_suite,
)
from amdslab.exceptions import ManifestError
from amdslab.output import read_json
from amdslab.pipeline import RunLayout, build_system, load_run_split


class TestEvaluationWorkflow(unittest.TestCase):
    """
    Test the evaluation of a small trained system.
    Test cases:
    - test_suite_sources: Gradient batches come from malicious rows, distribution batches from all.
    - test_suite_round_trip: A saved suite loads back unchanged.
    - test_missing_batches: Loading an incomplete suite names every missing batch.
    - test_clean_rows_deterministic: The clean evaluation rows depend only on the seed.
    - test_report_files: Every table is written as JSON and text, with a separate timing file.
    - test_weights_table: Weights are on the simplex and cover every attack and category.
    - test_two_stage_table: AUCs lie in [0, 1] and the clean false positive rate is reported.
    - test_cascade_table: The cascade saves anomaly evaluations.
    - test_baselines_table: Every system is compared on the same rows.
    - test_ablation_table: Uniform voting reproduces the standard ensemble.
    - test_adaptive_table: Both adaptive variants are evaluated with their score reduction.
    - test_scaling_table: The FGSM step grows with the square root of the dimension.
    """

    @classmethod
    def setUpClass(cls):
        cls.run_dir = tempfile.mkdtemp()
        cls.config = load_config("./testcase_data/tiny.yaml", {"output_dir": cls.run_dir})
        cls.manifest = build_system(cls.config)
        cls.layout = RunLayout(cls.run_dir)
        cls.test = load_run_split(cls.layout, "test", cls.manifest)
        train = load_run_split(cls.layout, "train", cls.manifest)
        cls.suite = build_test_suite(cls.config, cls.manifest, cls.test)
        save_test_suite(cls.suite, cls.layout.attacks, cls.manifest.scaler.schema)
        cls.tables = run_evaluation(cls.config, cls.manifest, cls.test, cls.suite, train, cls.layout.reports)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.run_dir, ignore_errors=True)

    def test_suite_sources(self):
        self.assertEqual(list(self.suite), list(self.config.attacks.kinds))
        for kind in ("fgsm", "pgd_linf", "spsa"):
            self.assertTrue(np.all(self.test.labels[self.suite[kind].origin_indices] != 0))
        self.assertEqual(len(self.suite["morphing"]), 60)
        self.assertEqual(len(self.suite["cw_l2"]), 40)

    def test_suite_round_trip(self):
        loaded = load_test_suite(self.layout.attacks, list(self.suite), self.manifest.scaler.schema)
        for kind, batch in self.suite.items():
            np.testing.assert_allclose(loaded[kind].adv_features, batch.adv_features)
            self.assertEqual(loaded[kind].below_gate, batch.below_gate)

    def test_missing_batches(self):
        with tempfile.TemporaryDirectory() as directory:
            with self.assertRaises(ManifestError) as context:
                load_test_suite(directory, ["fgsm", "morphing"], self.manifest.scaler.schema)
        self.assertIn("fgsm", str(context.exception))
        self.assertIn("morphing", str(context.exception))

    def test_clean_rows_deterministic(self):
        first = EvaluationContext.build(self.config, self.manifest, self.test, self.suite)
        second = EvaluationContext.build(self.config, self.manifest, self.test, self.suite)
        np.testing.assert_array_equal(first.clean_features, second.clean_features)
        self.assertEqual(first.clean_labels.size, 150)

    def test_report_files(self):
        for stem in [
            "table1_weights",
            "table2_twostage",
            "table3_cascade",
            "table4_baselines",
            "table5_ablation",
            "table6_scaling",
            "table7_adaptive",
        ]:
            self.assertTrue(os.path.isfile(os.path.join(self.layout.reports, f"{stem}.json")))
            self.assertTrue(os.path.isfile(os.path.join(self.layout.reports, f"{stem}.txt")))
        timing = read_json(os.path.join(self.layout.reports, "timing.json"))
        self.assertIn("latency_ms_per_sample", timing["cascade"])
        self.assertEqual(
            sorted(self.tables),
            ["ablation", "adaptive", "baselines", "cascade", "scaling", "two_stage", "weights"],
        )

    def test_weights_table(self):
        table = self.tables["weights"]
        names = {row["weights"] for row in table["rows"]}
        self.assertTrue(set(self.config.attacks.kinds) <= names)
        self.assertTrue({"gradient", "distribution", "generic"} <= names)
        for row in table["rows"]:
            self.assertAlmostEqual(row["alpha"] + row["beta"] + row["gamma"], 1.0)

    def test_two_stage_table(self):
        table = self.tables["two_stage"]
        for row in table["rows"]:
            self.assertGreaterEqual(row["auc_two_stage"], 0.0)
            self.assertLessEqual(row["auc_two_stage"], 1.0)
        self.assertGreaterEqual(table["clean_fpr"], 0.0)
        self.assertIn("f1", table["category_inference"])

    def test_cascade_table(self):
        table = self.tables["cascade"]
        cascade, full = table["rows"]
        self.assertGreater(table["mahalanobis_saved"], 0)
        self.assertEqual(full["stage1"], 0)
        self.assertEqual(cascade["stage1"] + cascade["stage2"], table["n_samples"])

    def test_baselines_table(self):
        table = self.tables["baselines"]
        systems = [row["system"] for row in table["rows"]]
        self.assertEqual(systems, ["standard", "adversarial_training", "single_best", "uniform_ads", "amds"])
        self.assertEqual(set(table["per_attack_accuracy"]["amds"]), set(self.suite))
        self.assertIn("p_value", table["significance"]["amds_vs_standard"])

    def test_ablation_table(self):
        table = self.tables["ablation"]
        self.assertEqual(len(table["rows"]), 4)
        self.assertTrue(table["checks"]["uniform_voting_matches_standard"])

    def test_adaptive_table(self):
        table = self.tables["adaptive"]
        rows = {row["attack"]: row for row in table["rows"]}
        self.assertEqual(set(rows), {"fgsm", "pgd_linf", "adaptive_baseline", "adaptive_improved"})
        self.assertIsNone(rows["fgsm"]["ads_reduction"])
        self.assertIsNotNone(rows["adaptive_improved"]["ads_reduction"])

    def test_scaling_table(self):
        table = self.tables["scaling"]
        ratio = table["ratios"]["0.5"]["16"]
        self.assertAlmostEqual(ratio["expected_ratio"], np.sqrt(2))
        for row in table["rows"]:
            if row["full_support_fraction"] == 1.0:
                self.assertAlmostEqual(row["l2_norm"], row["expected_l2_norm"])


if __name__ == "__main__":
    unittest.main(verbosity=2)
