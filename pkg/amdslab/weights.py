"""
Attack-driven suspicion score (ADS), rank-based AUC, simplex weight learning, model weights per
attack category and confidence blending.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .config import (
    ATTACK_CATEGORIES,
    CATEGORIES,
    CONF_CUTOFF,
    CONF_SCALE,
    ENSEMBLE_SIZE,
    GRID_STEP,
    MIN_WEIGHT_SAMPLES,
    REFINE_STEP,
    SIGNAL_NAMES,
    TAU_ANOMALY,
)
from .exceptions import DataError, UndefinedMetricError

logger = logging.getLogger(__name__)

_SIMPLEX_TOLERANCE = 1e-9
_GRID_CHUNK = 512
_MAX_REFINE_MOVES = 10000


@dataclass(frozen=True)
class SignalWeights:
    """
    Weights (alpha, beta, gamma) of the entropy, disagreement and anomaly signals.
    """

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        values = self.as_array()
        if np.any(values < -_SIMPLEX_TOLERANCE) or abs(values.sum() - 1.0) > _SIMPLEX_TOLERANCE:
            raise DataError(f"Signal weights {tuple(values)} are not on the simplex.")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, values) -> "SignalWeights":
        alpha, beta, gamma = (float(v) for v in values)
        return cls(alpha, beta, gamma)

    @classmethod
    def uniform(cls) -> "SignalWeights":
        return cls(1 / 3, 1 / 3, 1 / 3)

    def dominant(self) -> str:
        """Name of the signal with the largest weight."""
        return SIGNAL_NAMES[int(np.argmax(self.as_array()))]

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, payload: dict) -> "SignalWeights":
        return cls(payload["alpha"], payload["beta"], payload["gamma"])


def ads(signals, weights: SignalWeights):
    """
    Convex combination of normalized signals; accepts (3,) or (n, 3).
    """
    return np.asarray(signals, dtype=float) @ weights.as_array()


def auc(clean_scores, adv_scores) -> float:
    """
    Probability that an adversarial score exceeds a clean score, counting ties as one half.

    Computed from average ranks (Mann-Whitney U).

    Raises:
        UndefinedMetricError: If either side is empty.
    """
    clean_scores = np.asarray(clean_scores, dtype=float).ravel()
    adv_scores = np.asarray(adv_scores, dtype=float).ravel()
    if clean_scores.size == 0 or adv_scores.size == 0:
        raise UndefinedMetricError("AUC needs at least one clean and one adversarial score.")
    return float(_auc_rows(clean_scores[None, :], adv_scores[None, :])[0])


def _auc_rows(clean_scores: np.ndarray, adv_scores: np.ndarray) -> np.ndarray:
    n_clean, n_adv = clean_scores.shape[1], adv_scores.shape[1]
    ranks = scipy.stats.rankdata(np.hstack([clean_scores, adv_scores]), axis=1)
    u_stat = ranks[:, n_clean:].sum(axis=1) - n_adv * (n_adv + 1) / 2
    return u_stat / (n_adv * n_clean)


def signal_aucs(clean_signals, adv_signals) -> dict:
    """AUC of every pure-signal weighting."""
    clean_signals, adv_signals = np.asarray(clean_signals), np.asarray(adv_signals)
    return {
        name: auc(clean_signals[:, i], adv_signals[:, i]) for i, name in enumerate(SIGNAL_NAMES)
    }


def _steps(step: float) -> int:
    count = int(round(1.0 / step))
    if count < 1 or abs(count * step - 1.0) > 1e-9:
        raise ValueError(f"Step {step} must divide 1 into a whole number of parts.")
    return count


def simplex_grid(step: float = GRID_STEP) -> np.ndarray:
    """
    Points (i, j, k) / N with i + j + k = N, in lexicographic order of (alpha, beta).
    """
    n = _steps(step)
    points = [(i, j, n - i - j) for i in range(n + 1) for j in range(n + 1 - i)]
    return np.array(points, dtype=float) / n


def _grid_aucs(grid: np.ndarray, clean_signals: np.ndarray, adv_signals: np.ndarray) -> np.ndarray:
    results = []
    for start in range(0, grid.shape[0], _GRID_CHUNK):
        chunk = grid[start : start + _GRID_CHUNK]
        results.append(_auc_rows(chunk @ clean_signals.T, chunk @ adv_signals.T))
    return np.concatenate(results)


def grid_search(clean_signals, adv_signals, step: float = GRID_STEP):
    """
    Exhaustive AUC maximization over the simplex grid.

    Ties go to the lexicographically smallest (alpha, beta, gamma).

    Returns:
        tuple: (weights array, AUC, all grid AUCs).
    """
    grid = simplex_grid(step)
    aucs = _grid_aucs(grid, np.asarray(clean_signals, float), np.asarray(adv_signals, float))
    best = int(np.argmax(aucs))
    return grid[best], float(aucs[best]), aucs


def _refine(counts: np.ndarray, total: int, best_auc: float, clean_signals, adv_signals):
    """
    Pattern search on the finer lattice, moving one unit between two components at a time and
    accepting strict improvements only.
    """
    directions = [(i, j) for i in range(3) for j in range(3) if i != j]
    for _ in range(_MAX_REFINE_MOVES):
        candidates = []
        for source, target in directions:
            if counts[source] == 0:
                continue
            moved = counts.copy()
            moved[source] -= 1
            moved[target] += 1
            candidates.append(moved)
        points = np.array(candidates, dtype=float) / total
        aucs = _auc_rows(points @ clean_signals.T, points @ adv_signals.T)
        best = int(np.argmax(aucs))
        if not aucs[best] > best_auc:
            break
        counts, best_auc = candidates[best], float(aucs[best])
    return counts, best_auc


def learn_weights(
    clean_signals, adv_signals, grid_step: float = GRID_STEP, refine_step: float = REFINE_STEP
):
    """
    Learn the signal weights that maximize detection AUC between clean and adversarial samples.

    The search evaluates the full simplex grid at ``grid_step`` and then refines the best grid
    point by pattern search at ``refine_step``.

    Input:
        clean_signals (np.ndarray): Normalized clean signals, shape (n_clean, 3).
        adv_signals (np.ndarray): Normalized adversarial signals, shape (n_adv, 3).
        grid_step (float): Resolution of the exhaustive grid.
        refine_step (float): Resolution of the refinement.

    Returns:
        tuple: (SignalWeights, AUC).

    Raises:
        DataError: If either side has fewer than 30 samples.
    """
    clean_signals = np.atleast_2d(np.asarray(clean_signals, dtype=float))
    adv_signals = np.atleast_2d(np.asarray(adv_signals, dtype=float))
    if clean_signals.shape[0] < MIN_WEIGHT_SAMPLES or adv_signals.shape[0] < MIN_WEIGHT_SAMPLES:
        raise DataError(
            f"Weight learning needs at least {MIN_WEIGHT_SAMPLES} clean and adversarial samples, "
            f"got {clean_signals.shape[0]} and {adv_signals.shape[0]}."
        )
    pooled = np.vstack([clean_signals, adv_signals])
    if np.all(np.ptp(pooled, axis=0) == 0):
        warnings.warn("All signals are constant; returning uniform weights.")
        return SignalWeights.uniform(), 0.5
    point, best_auc, _ = grid_search(clean_signals, adv_signals, grid_step)
    total = _steps(refine_step)
    ratio = total // _steps(grid_step)
    if ratio * _steps(grid_step) != total:
        raise ValueError("The refinement step must divide the grid step.")
    counts = np.rint(point * total).astype(int)
    counts[2] = total - counts[0] - counts[1]
    counts, best_auc = _refine(counts, total, best_auc, clean_signals, adv_signals)
    weights = SignalWeights.from_array(counts / total)
    logger.debug("Learned weights %s with AUC %.4f", weights.to_dict(), best_auc)
    return weights, best_auc


def category_average(per_attack: dict, category_map: dict = None) -> dict:
    """
    Componentwise mean of the attack-specific weights within every category.

    Input:
        per_attack (dict): Attack kind to SignalWeights.
        category_map (dict): Attack kind to category. Defaults to the built-in taxonomy.

    Returns:
        dict: Category to SignalWeights, for every category of CATEGORIES.

    Raises:
        DataError: If a category has no attack.
    """
    category_map = ATTACK_CATEGORIES if category_map is None else category_map
    averages = {}
    for category in CATEGORIES:
        members = [w.as_array() for kind, w in per_attack.items() if category_map[kind] == category]
        if not members:
            raise DataError(f"No attack-specific weights in the '{category}' category.")
        mean = np.mean(members, axis=0)
        averages[category] = SignalWeights.from_array(mean)
    return averages


@dataclass
class WeightBank:
    """
    Learned signal weights at three granularities.

    Attributes:
        generic (SignalWeights): Weights learned on the pooled adversarial set.
        per_attack (dict): Attack kind to weights, for attacks used in learning.
        categories (dict): Category to the average of its attack-specific weights.
        excluded (dict): Weights of attacks kept out of learning (weak attacks).
        pooled_categories (dict): Category weights learned on the pooled category data.
        aucs (dict): Training AUC of every learned weight vector.
        signal_aucs (dict): Pure-signal AUCs per attack and pooled.
    """

    generic: SignalWeights
    per_attack: dict
    categories: dict
    excluded: dict = field(default_factory=dict)
    pooled_categories: dict = field(default_factory=dict)
    aucs: dict = field(default_factory=dict)
    signal_aucs: dict = field(default_factory=dict)

    def for_category(self, category: str, pooled: bool = False) -> SignalWeights:
        table = self.pooled_categories if pooled and self.pooled_categories else self.categories
        return table[category]

    def for_attack(self, kind: str) -> SignalWeights:
        if kind in self.per_attack:
            return self.per_attack[kind]
        return self.excluded[kind]

    def to_dict(self) -> dict:
        return {
            "generic": self.generic.to_dict(),
            "per_attack": {k: w.to_dict() for k, w in self.per_attack.items()},
            "categories": {k: w.to_dict() for k, w in self.categories.items()},
            "excluded": {k: w.to_dict() for k, w in self.excluded.items()},
            "pooled_categories": {k: w.to_dict() for k, w in self.pooled_categories.items()},
            "aucs": dict(self.aucs),
            "signal_aucs": dict(self.signal_aucs),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "WeightBank":
        def table(name):
            return {k: SignalWeights.from_dict(v) for k, v in payload.get(name, {}).items()}

        return cls(
            generic=SignalWeights.from_dict(payload["generic"]),
            per_attack=table("per_attack"),
            categories=table("categories"),
            excluded=table("excluded"),
            pooled_categories=table("pooled_categories"),
            aucs=payload.get("aucs", {}),
            signal_aucs=payload.get("signal_aucs", {}),
        )


def model_category_weights(accuracies) -> np.ndarray:
    """
    Cubic-sharpened model weights ``acc_i ** 3 / sum_j acc_j ** 3``.

    All-zero accuracies fall back to uniform weights with a warning.

    Raises:
        DataError: If an accuracy lies outside [0, 1].
    """
    accuracies = np.asarray(accuracies, dtype=float)
    if np.any(accuracies < 0) or np.any(accuracies > 1):
        raise DataError("Accuracies must lie in [0, 1].")
    cubes = accuracies**3
    if cubes.sum() == 0:
        warnings.warn("All model accuracies are zero; using uniform model weights.")
        return np.full(accuracies.shape, 1.0 / accuracies.size)
    return cubes / cubes.sum()


@dataclass
class ModelWeightBank:
    """Per-category ensemble model weights."""

    categories: dict
    accuracies: dict = field(default_factory=dict)

    @property
    def uniform(self) -> np.ndarray:
        return np.full(ENSEMBLE_SIZE, 1.0 / ENSEMBLE_SIZE)

    def for_category(self, category: str) -> np.ndarray:
        return np.asarray(self.categories[category], dtype=float)

    def to_dict(self) -> dict:
        return {
            "categories": {k: np.asarray(v).tolist() for k, v in self.categories.items()},
            "accuracies": {k: np.asarray(v).tolist() for k, v in self.accuracies.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelWeightBank":
        return cls(
            categories={k: np.asarray(v) for k, v in payload["categories"].items()},
            accuracies={k: np.asarray(v) for k, v in payload.get("accuracies", {}).items()},
        )


def blend(model_weights, confidence: float, cutoff: float = CONF_CUTOFF, inclusive: bool = True):
    """
    Keep the category model weights when the category confidence reaches the cutoff, otherwise
    mix them half and half with uniform weights.

    Input:
        model_weights (np.ndarray): Category model weights on the simplex.
        confidence (float): Category confidence in [0, 1].
        cutoff (float): Confidence above which the weights are kept.
        inclusive (bool): Whether a confidence equal to the cutoff keeps the weights.
    """
    model_weights = np.asarray(model_weights, dtype=float)
    keep = confidence >= cutoff if inclusive else confidence > cutoff
    if keep:
        return model_weights.copy()
    return 0.5 * model_weights + 0.5 / model_weights.size


def category_confidence(anomaly_norm, tau_anomaly: float = TAU_ANOMALY, scale: float = CONF_SCALE):
    """Confidence ``min(1, |A - tau| / scale)`` of the inferred category."""
    return np.minimum(1.0, np.abs(np.asarray(anomaly_norm, dtype=float) - tau_anomaly) / scale)
