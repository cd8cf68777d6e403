"""
The three detection signals (ensemble entropy, ensemble disagreement and Mahalanobis anomaly)
and their min-max normalization to [0, 1].

Signal arrays follow the column order of ``SIGNAL_NAMES``: entropy, disagreement, anomaly.
"""

import logging
import threading
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .config import ENSEMBLE_SIZE, SIGNAL_NAMES
from .exceptions import DataError, NumericalError

logger = logging.getLogger(__name__)

_SIMPLEX_TOLERANCE = 1e-6


@dataclass(frozen=True)
class SignalVector:
    """Raw signals of one sample."""

    entropy: float
    disagreement: float
    anomaly: float

    def as_array(self) -> np.ndarray:
        return np.array([self.entropy, self.disagreement, self.anomaly])


def _check_simplex(probabilities: np.ndarray):
    sums = probabilities.sum(axis=-1)
    if np.any(probabilities < -_SIMPLEX_TOLERANCE) or np.any(np.abs(sums - 1) > _SIMPLEX_TOLERANCE):
        raise DataError("Probability vectors must lie on the simplex.")


def entropy_batch(ens_prob: np.ndarray) -> np.ndarray:
    """
    Shannon entropy in nats of every row of an (n, C) probability matrix, with 0 log 0 = 0.
    """
    ens_prob = np.atleast_2d(np.asarray(ens_prob, dtype=float))
    _check_simplex(ens_prob)
    if ens_prob.shape[0] == 0:
        return np.zeros(0)
    return scipy.stats.entropy(np.clip(ens_prob, 0.0, None), axis=1)


def entropy(ens_prob) -> float:
    """
    Entropy of the ensemble distribution of one sample.

    Raises:
        DataError: If the input is not a probability vector.
    """
    return float(entropy_batch(np.asarray(ens_prob, dtype=float)[None, :])[0])


def disagreement_batch(prob_tensor: np.ndarray) -> np.ndarray:
    """
    Mean per-class population variance across the ensemble members.

    Input:
        prob_tensor (np.ndarray): Member probabilities of shape (n, 6, C).

    Returns:
        np.ndarray: Disagreement of every sample, shape (n,).
    """
    prob_tensor = np.asarray(prob_tensor, dtype=float)
    if prob_tensor.ndim != 3 or prob_tensor.shape[1] != ENSEMBLE_SIZE:
        raise DataError(f"Disagreement needs exactly {ENSEMBLE_SIZE} member rows per sample.")
    return prob_tensor.var(axis=1, ddof=0).mean(axis=-1)


def disagreement(prob_matrix) -> float:
    """
    Disagreement of one (6, C) probability matrix.

    Raises:
        DataError: If the matrix does not have one row per ensemble member.
    """
    prob_matrix = np.asarray(prob_matrix, dtype=float)
    if prob_matrix.ndim != 2:
        raise DataError("A probability matrix must be two-dimensional.")
    return float(disagreement_batch(prob_matrix[None, :, :])[0])


def anomaly_batch(features: np.ndarray, benign) -> np.ndarray:
    """
    Mahalanobis distance of every row from the benign distribution.

    Raises:
        DataError: If the feature width does not match the benign distribution.
        NumericalError: If a distance is not finite (names the first offending row).
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != benign.n_features:
        raise DataError(f"Expected {benign.n_features} features, got {features.shape[1]}.")
    diff = features - benign.mu
    squared = np.einsum("ij,jk,ik->i", diff, benign.sigma_inv, diff)
    distances = np.sqrt(np.clip(squared, 0.0, None))
    bad = np.flatnonzero(~np.isfinite(distances))
    if bad.size:
        raise NumericalError(f"Anomaly score of sample {int(bad[0])} is not finite.")
    return distances


def anomaly(x, benign) -> float:
    """Mahalanobis distance of one sample from the benign distribution."""
    return float(anomaly_batch(np.asarray(x, dtype=float)[None, :], benign)[0])


class SignalNormalizer:
    """
    Frozen per-signal min-max bounds.

    A signal whose calibration pool is constant maps to 0.5.
    """

    def __init__(self, bounds):
        bounds = np.asarray(bounds, dtype=float)
        if bounds.shape != (len(SIGNAL_NAMES), 2):
            raise DataError("Normalizer bounds must have one (min, max) pair per signal.")
        self.bounds = bounds

    @classmethod
    def fit(cls, raw: np.ndarray) -> "SignalNormalizer":
        """
        Fit bounds on a calibration pool of raw signals with shape (n, 3).

        Raises:
            DataError: If the pool is empty.
        """
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        if raw.shape[0] == 0:
            raise DataError("The calibration pool is empty.")
        bounds = np.column_stack([raw.min(axis=0), raw.max(axis=0)])
        for name, (low, high) in zip(SIGNAL_NAMES, bounds):
            if not high > low:
                warnings.warn(f"Signal '{name}' is constant on the calibration pool; mapped to 0.5.")
        return cls(bounds)

    def apply(self, raw) -> np.ndarray:
        """
        Normalize raw signals of shape (3,) or (n, 3) and clip them to [0, 1].
        """
        raw = np.asarray(raw, dtype=float)
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        span = high - low
        degenerate = ~(span > 0)
        scaled = (raw - low) / np.where(degenerate, 1.0, span)
        scaled = np.where(degenerate, 0.5, scaled)
        return np.clip(scaled, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            name: {"min": float(low), "max": float(high)}
            for name, (low, high) in zip(SIGNAL_NAMES, self.bounds)
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SignalNormalizer":
        return cls([[payload[name]["min"], payload[name]["max"]] for name in SIGNAL_NAMES])


def normalizer_fit(raw) -> SignalNormalizer:
    return SignalNormalizer.fit(raw)


def normalizer_apply(normalizer: SignalNormalizer, raw) -> np.ndarray:
    return normalizer.apply(raw)


class SignalScorer:
    """
    Computes raw and normalized signals for ensemble outputs and counts Mahalanobis evaluations.
    """

    def __init__(self, benign, normalizer: SignalNormalizer = None):
        self.benign = benign
        self.normalizer = normalizer
        self.mahalanobis_count = 0
        self._lock = threading.Lock()

    def anomaly(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        scores = anomaly_batch(features, self.benign)
        with self._lock:
            self.mahalanobis_count += features.shape[0]
        return scores

    def raw(self, batch, features: np.ndarray) -> np.ndarray:
        """
        Raw (n, 3) signals of an ensemble batch and its feature rows.
        """
        return np.column_stack(
            [entropy_batch(batch.ens_prob), batch.disagreement, self.anomaly(features)]
        )

    def normalized(self, batch, features: np.ndarray) -> np.ndarray:
        if self.normalizer is None:
            raise DataError("The signal normalizer has not been fitted.")
        return self.normalizer.apply(self.raw(batch, features))

    def reset(self):
        with self._lock:
            self.mahalanobis_count = 0
