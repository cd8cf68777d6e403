"""
This file tests the detection signals and their normalization.
"""

import unittest
import warnings

import numpy as np

from amdslab.exceptions import DataError, IllConditionedError
from amdslab.reader import LabeledDataset, benign_stats
from amdslab.signals import (
    SignalNormalizer,
    anomaly,
    anomaly_batch,
    disagreement,
    entropy,
)


class TestEntropyAndDisagreement(unittest.TestCase):
    """
    Test the entropy and disagreement signals.
    Test cases:
    - test_entropy_bounds: A one-hot vector has entropy 0, the uniform vector log C.
    - test_entropy_off_simplex: A vector that does not sum to one raises a DataError.
    - test_disagreement_identical_members: Identical members give zero disagreement.
    - test_disagreement_value: Disagreement is the mean per-class population variance.
    - test_disagreement_wrong_rows: A matrix without six member rows raises a DataError.
    """

    def test_entropy_bounds(self):
        self.assertEqual(entropy([0.0, 1.0, 0.0]), 0.0)
        self.assertAlmostEqual(entropy(np.full(4, 0.25)), np.log(4), places=12)

    def test_entropy_off_simplex(self):
        with self.assertRaises(DataError):
            entropy([0.5, 0.6])

    def test_disagreement_identical_members(self):
        self.assertEqual(disagreement(np.tile([0.2, 0.8], (6, 1))), 0.0)

    def test_disagreement_value(self):
        matrix = np.array([[1.0, 0.0]] * 3 + [[0.0, 1.0]] * 3)
        self.assertAlmostEqual(disagreement(matrix), 0.25, places=12)

    def test_disagreement_wrong_rows(self):
        with self.assertRaises(DataError):
            disagreement(np.tile([0.5, 0.5], (5, 1)))


class TestAnomaly(unittest.TestCase):
    """
    Test the Mahalanobis anomaly signal and the benign distribution.
    Test cases:
    - test_anomaly_matches_linear_solve: The distance equals the linear-solve formula.
    - test_anomaly_at_mean: The benign mean has distance zero.
    - test_anomaly_wrong_width: A vector of the wrong width raises a DataError.
    - test_too_few_benign_rows: Fewer than d + 1 benign rows raise an IllConditionedError.
    """

    def setUp(self):
        rng = np.random.default_rng(3)
        mixing = np.array([[2.0, 0.3, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 0.7]])
        features = rng.standard_normal((400, 3)) @ mixing
        labels = np.zeros(400, dtype=int)
        labels[300:] = 1
        self.train = LabeledDataset(features, labels, 2, features.std(axis=0), ["a", "b", "c"])
        self.benign = benign_stats(self.train, benign_label=0)
        self.rng = rng

    def test_anomaly_matches_linear_solve(self):
        regularized = self.benign.sigma + self.benign.ridge_lambda * np.eye(3)
        for x in self.rng.standard_normal((5, 3)) * 2:
            diff = x - self.benign.mu
            expected = np.sqrt(diff @ np.linalg.solve(regularized, diff))
            self.assertAlmostEqual(anomaly(x, self.benign), expected, places=8)

    def test_anomaly_at_mean(self):
        self.assertAlmostEqual(anomaly(self.benign.mu, self.benign), 0.0, places=12)
        self.assertEqual(anomaly_batch(np.zeros((0, 3)), self.benign).shape, (0,))

    def test_anomaly_wrong_width(self):
        with self.assertRaises(DataError):
            anomaly(np.zeros(4), self.benign)

    def test_too_few_benign_rows(self):
        subset = self.train.subset(np.arange(2))
        with self.assertRaises(IllConditionedError):
            benign_stats(subset, benign_label=0)


class TestSignalNormalizer(unittest.TestCase):
    """
    Test the min-max signal normalizer.
    Test cases:
    - test_fit_and_clip: Pool bounds map to 0 and 1 and values outside are clipped.
    - test_constant_signal: A constant signal maps to 0.5 with a warning.
    - test_empty_pool: An empty calibration pool raises a DataError.
    - test_dict_round_trip: The bounds survive to_dict and from_dict.
    """

    def setUp(self):
        self.pool = np.array([[0.0, 0.0, 1.0], [1.0, 0.2, 3.0], [0.5, 0.1, 2.0]])

    def test_fit_and_clip(self):
        normalizer = SignalNormalizer.fit(self.pool)
        np.testing.assert_allclose(normalizer.apply([0.5, 0.1, 2.0]), [0.5, 0.5, 0.5])
        np.testing.assert_allclose(normalizer.apply([2.0, -1.0, 3.0]), [1.0, 0.0, 1.0])

    def test_constant_signal(self):
        pool = self.pool.copy()
        pool[:, 1] = 0.3
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            normalizer = SignalNormalizer.fit(pool)
        self.assertTrue(any("disagreement" in str(w.message) for w in caught))
        self.assertEqual(normalizer.apply([0.0, 0.9, 1.0])[1], 0.5)

    def test_empty_pool(self):
        with self.assertRaises(DataError):
            SignalNormalizer.fit(np.zeros((0, 3)))

    def test_dict_round_trip(self):
        normalizer = SignalNormalizer.fit(self.pool)
        restored = SignalNormalizer.from_dict(normalizer.to_dict())
        np.testing.assert_array_equal(restored.bounds, normalizer.bounds)


if __name__ == "__main__":
    unittest.main(verbosity=2)
