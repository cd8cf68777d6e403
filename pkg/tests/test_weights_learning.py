"""
This file tests the suspicion score, AUC, weight learning and model weighting.
"""

import unittest
import warnings

import numpy as np

from amdslab.exceptions import DataError, UndefinedMetricError
from amdslab.weights import (
    SignalWeights,
    WeightBank,
    ads,
    auc,
    blend,
    category_average,
    category_confidence,
    grid_search,
    learn_weights,
    model_category_weights,
    simplex_grid,
)


def brute_force_auc(clean, adv):
    wins = 0.0
    for a in adv:
        for c in clean:
            wins += 1.0 if a > c else 0.5 if a == c else 0.0
    return wins / (len(adv) * len(clean))


class TestAdsAndAuc(unittest.TestCase):
    """
    Test the suspicion score and the rank-based AUC.
    Test cases:
    - test_ads_convex_combination: The score is the weighted sum of the signals.
    - test_auc_matches_pair_count: The AUC equals the pairwise win rate with half ties.
    - test_auc_separated: Perfectly separated scores give AUC 1.
    - test_auc_empty: An empty side raises an UndefinedMetricError.
    - test_weights_off_simplex: Weights that do not sum to one raise a DataError.
    """

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_ads_convex_combination(self):
        weights = SignalWeights(0.2, 0.3, 0.5)
        self.assertAlmostEqual(float(ads([1.0, 0.5, 0.2], weights)), 0.45, places=12)
        signals = self.rng.random((4, 3))
        scores = ads(signals, weights)
        self.assertTrue(np.all((scores >= 0) & (scores <= 1)))

    def test_auc_matches_pair_count(self):
        clean = np.round(self.rng.random(40), 1)
        adv = np.round(self.rng.random(25) + 0.2, 1)
        self.assertAlmostEqual(auc(clean, adv), brute_force_auc(clean, adv), places=12)

    def test_auc_separated(self):
        self.assertEqual(auc([0.1, 0.2], [0.3, 0.4]), 1.0)
        self.assertEqual(auc([0.5, 0.5], [0.5]), 0.5)

    def test_auc_empty(self):
        with self.assertRaises(UndefinedMetricError):
            auc([], [0.2])

    def test_weights_off_simplex(self):
        with self.assertRaises(DataError):
            SignalWeights(0.5, 0.5, 0.5)


class TestLearnWeights(unittest.TestCase):
    """
    Test the simplex grid search and weight learning.
    Test cases:
    - test_grid_size: The 0.01 grid has 5151 points on the simplex.
    - test_grid_search_optimum: The grid optimum reaches the best AUC of all grid points.
    - test_learn_dominant_signal: A batch separated by disagreement only learns beta as dominant.
    - test_refinement_not_worse: Refinement never lowers the grid AUC.
    - test_too_few_samples: Fewer than 30 samples per side raise a DataError.
    - test_constant_signals: All-constant signals give uniform weights with a warning.
    """

    def setUp(self):
        rng = np.random.default_rng(1)
        self.clean = rng.random((60, 3)) * [1.0, 0.4, 1.0]
        self.adv = rng.random((60, 3)) * [1.0, 0.4, 1.0]
        self.adv[:, 1] += 0.5

    def test_grid_size(self):
        grid = simplex_grid(0.01)
        self.assertEqual(grid.shape, (5151, 3))
        np.testing.assert_allclose(grid.sum(axis=1), 1.0)

    def test_grid_search_optimum(self):
        point, best, aucs = grid_search(self.clean, self.adv, 0.1)
        self.assertEqual(best, aucs.max())
        self.assertAlmostEqual(point.sum(), 1.0)

    def test_learn_dominant_signal(self):
        weights, score = learn_weights(self.clean, self.adv)
        self.assertEqual(weights.dominant(), "disagreement")
        self.assertEqual(score, 1.0)

    def test_refinement_not_worse(self):
        rng = np.random.default_rng(2)
        clean, adv = rng.random((50, 3)), rng.random((50, 3)) + [0.1, 0.0, 0.05]
        _, grid_best, _ = grid_search(clean, adv, 0.01)
        weights, refined_best = learn_weights(clean, adv)
        self.assertGreaterEqual(refined_best, grid_best)
        self.assertAlmostEqual(refined_best, auc(ads(clean, weights), ads(adv, weights)))

    def test_too_few_samples(self):
        with self.assertRaises(DataError):
            learn_weights(self.clean[:29], self.adv)

    def test_constant_signals(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            weights, score = learn_weights(np.full((40, 3), 0.3), np.full((40, 3), 0.3))
        self.assertTrue(caught)
        self.assertEqual(weights, SignalWeights.uniform())
        self.assertEqual(score, 0.5)


class TestCategoryAndModelWeights(unittest.TestCase):
    """
    Test category averaging, cubic model weights, blending and category confidence.
    Test cases:
    - test_category_average: Category weights are the componentwise mean of their attacks.
    - test_category_without_attack: A category with no attack raises a DataError.
    - test_model_weights_cubic: Model weights are the normalized cubed accuracies.
    - test_model_weights_all_zero: All-zero accuracies fall back to uniform with a warning.
    - test_blend: Low confidence mixes the weights half and half with uniform weights.
    - test_category_confidence: Anomaly values 0.50, 0.56 and 0.62 give 0, 0.5 and 1.
    - test_bank_dict_round_trip: A weight bank survives to_dict and from_dict.
    """

    def setUp(self):
        self.per_attack = {
            "fgsm": SignalWeights(0.1, 0.8, 0.1),
            "pgd_linf": SignalWeights(0.3, 0.6, 0.1),
            "morphing": SignalWeights(0.0, 0.2, 0.8),
        }

    def test_category_average(self):
        averages = category_average(self.per_attack)
        np.testing.assert_allclose(averages["gradient"].as_array(), [0.2, 0.7, 0.1])
        np.testing.assert_allclose(averages["distribution"].as_array(), [0.0, 0.2, 0.8])

    def test_category_without_attack(self):
        with self.assertRaises(DataError):
            category_average({"fgsm": SignalWeights.uniform()})

    def test_model_weights_cubic(self):
        accuracies = [1.0, 0.5, 0.5, 0.5, 0.5, 0.0]
        expected = np.array([1.0, 0.125, 0.125, 0.125, 0.125, 0.0]) / 1.5
        np.testing.assert_allclose(model_category_weights(accuracies), expected)
        with self.assertRaises(DataError):
            model_category_weights([1.2, 0.5])

    def test_model_weights_all_zero(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            weights = model_category_weights(np.zeros(6))
        self.assertTrue(caught)
        np.testing.assert_allclose(weights, np.full(6, 1 / 6))

    def test_blend(self):
        weights = np.array([0.4, 0.2, 0.1, 0.1, 0.1, 0.1])
        np.testing.assert_allclose(blend(weights, 0.9), weights)
        np.testing.assert_allclose(blend(weights, 0.5), 0.5 * weights + 0.5 / 6)
        np.testing.assert_allclose(blend(weights, 0.75), weights)
        np.testing.assert_allclose(blend(weights, 0.75, inclusive=False), 0.5 * weights + 0.5 / 6)

    def test_category_confidence(self):
        np.testing.assert_allclose(
            category_confidence([0.50, 0.56, 0.62]), [0.0, 0.5, 1.0], atol=1e-12
        )

    def test_bank_dict_round_trip(self):
        bank = WeightBank(
            generic=SignalWeights.uniform(),
            per_attack=self.per_attack,
            categories=category_average(self.per_attack),
        )
        restored = WeightBank.from_dict(bank.to_dict())
        self.assertEqual(restored.for_attack("fgsm"), self.per_attack["fgsm"])
        self.assertEqual(restored.for_category("distribution"), self.per_attack["morphing"])


if __name__ == "__main__":
    unittest.main(verbosity=2)
