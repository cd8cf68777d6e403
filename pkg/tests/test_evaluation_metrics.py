"""
This file tests the evaluation metrics and bootstrap intervals.
"""

import unittest

import numpy as np

from amdslab.evaluation import (
    accuracy,
    bootstrap_ci,
    f1_macro,
    paired_bootstrap_test,
    per_class_f1,
)
from amdslab.exceptions import DataError, UndefinedMetricError


class TestMetrics(unittest.TestCase):
    """
    Test accuracy and F1.
    Test cases:
    - test_accuracy: Accuracy is the fraction of matching predictions.
    - test_accuracy_empty: Empty input raises an UndefinedMetricError.
    - test_misaligned: Inputs of different lengths raise a DataError.
    - test_per_class_f1: Per-class F1 covers classes in the labels or the predictions.
    - test_f1_macro: Macro F1 is the mean of the per-class F1.
    """

    def test_accuracy(self):
        self.assertEqual(accuracy([0, 1, 1, 2], [0, 1, 2, 2]), 0.75)

    def test_accuracy_empty(self):
        with self.assertRaises(UndefinedMetricError):
            accuracy([], [])

    def test_misaligned(self):
        with self.assertRaises(DataError):
            accuracy([0, 1], [0])

    def test_per_class_f1(self):
        scores = per_class_f1([0, 0, 1, 3], [0, 1, 1, 1])
        self.assertEqual(set(scores), {0, 1, 3})
        self.assertAlmostEqual(scores[0], 2 / 3)
        self.assertAlmostEqual(scores[1], 0.5)
        self.assertEqual(scores[3], 0.0)

    def test_f1_macro(self):
        self.assertAlmostEqual(f1_macro([0, 0, 1, 3], [0, 1, 1, 1]), (2 / 3 + 0.5) / 3)
        self.assertEqual(f1_macro([2, 2], [2, 2]), 1.0)


class TestBootstrap(unittest.TestCase):
    """
    Test the bootstrap interval and the paired bootstrap test.
    Test cases:
    - test_interval_contains_point: The interval contains the point estimate.
    - test_interval_deterministic: The same seed gives the same interval.
    - test_constant_metric: A perfect classifier has a degenerate interval at 1.
    - test_paired_test: A clearly better system has a positive difference and a small p-value.
    - test_empty_sample: An empty sample raises an UndefinedMetricError.
    """

    def setUp(self):
        rng = np.random.default_rng(0)
        self.labels = rng.integers(0, 3, 300)
        self.preds = np.where(rng.random(300) < 0.8, self.labels, (self.labels + 1) % 3)

    def test_interval_contains_point(self):
        low, point, high = bootstrap_ci(accuracy, self.preds, self.labels, iters=200, seed=1)
        self.assertLessEqual(low, point)
        self.assertLessEqual(point, high)
        self.assertLess(high - low, 0.2)

    def test_interval_deterministic(self):
        first = bootstrap_ci(f1_macro, self.preds, self.labels, iters=100, seed=3)
        second = bootstrap_ci(f1_macro, self.preds, self.labels, iters=100, seed=3)
        self.assertEqual(first, second)

    def test_constant_metric(self):
        self.assertEqual(bootstrap_ci(accuracy, self.labels, self.labels, iters=50), (1.0, 1.0, 1.0))

    def test_paired_test(self):
        result = paired_bootstrap_test(accuracy, self.labels, self.preds, self.labels, iters=200, seed=2)
        self.assertGreater(result["difference"], 0.1)
        self.assertLess(result["p_value"], 0.05)
        self.assertLessEqual(result["ci"][0], result["difference"])

    def test_empty_sample(self):
        with self.assertRaises(UndefinedMetricError):
            bootstrap_ci(accuracy, np.array([]), np.array([]))


if __name__ == "__main__":
    unittest.main(verbosity=2)
