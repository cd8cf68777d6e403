"""
Two-stage adaptive detection, threshold calibration, category inference and the cascade router.
"""

import logging
import threading
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .config import (
    CONF_CUTOFF,
    CONF_SCALE,
    MIN_CALIBRATION_SAMPLES,
    TARGET_FPR,
    TAU_ANOMALY,
    TAU_CONF,
    TAU_DISAGREE,
)
from .exceptions import ConfigError, DataError
from .model import EnsembleBatch
from .weights import ads

logger = logging.getLogger(__name__)

ANOMALY_INDEX = 2


@dataclass(frozen=True)
class Thresholds:
    tau_conf: float = TAU_CONF
    tau_disagree: float = TAU_DISAGREE
    tau_anomaly: float = TAU_ANOMALY
    tau_detect: float = None
    conf_scale: float = CONF_SCALE
    conf_cutoff: float = CONF_CUTOFF

    def __post_init__(self):
        for name in ("tau_conf", "tau_disagree", "tau_anomaly", "conf_scale", "conf_cutoff"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"Threshold {name} must lie in (0, 1).")

    def require_calibrated(self):
        """
        Raises:
            ConfigError: If tau_detect has not been calibrated.
        """
        if self.tau_detect is None:
            raise ConfigError("tau_detect has not been calibrated.")

    def with_tau_detect(self, tau_detect: float) -> "Thresholds":
        return replace(self, tau_detect=float(tau_detect))

    def to_dict(self) -> dict:
        return {
            "tau_conf": self.tau_conf,
            "tau_disagree": self.tau_disagree,
            "tau_anomaly": self.tau_anomaly,
            "tau_detect": self.tau_detect,
            "conf_scale": self.conf_scale,
            "conf_cutoff": self.conf_cutoff,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Thresholds":
        return cls(**payload)

    @classmethod
    def from_config(cls, thresholds) -> "Thresholds":
        return cls(
            tau_conf=thresholds.tau_conf,
            tau_disagree=thresholds.tau_disagree,
            tau_anomaly=thresholds.tau_anomaly,
            conf_scale=thresholds.conf_scale,
            conf_cutoff=thresholds.conf_cutoff,
        )


@dataclass
class DetectionResult:
    y_detect: int
    category: str
    ads_generic: float
    ads_refined: float
    cascade_stage: int
    anomaly_norm: float = None


def infer_category(anomaly_norm: float, tau_anomaly: float = TAU_ANOMALY) -> str:
    """'distribution' when the normalized anomaly exceeds tau_anomaly, 'gradient' otherwise."""
    return "distribution" if anomaly_norm > tau_anomaly else "gradient"


def infer_category_batch(anomaly_norm, tau_anomaly: float = TAU_ANOMALY) -> np.ndarray:
    return np.where(np.asarray(anomaly_norm) > tau_anomaly, "distribution", "gradient")


def refined_scores(signals, bank, tau_anomaly: float = TAU_ANOMALY, generic_only=False, pooled=False):
    """
    Generic and category-refined ADS of normalized (n, 3) signals, without thresholding.

    Returns:
        tuple: (categories, ads_generic, ads_refined) arrays.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    generic = ads(signals, bank.generic)
    categories = infer_category_batch(signals[:, ANOMALY_INDEX], tau_anomaly)
    if generic_only:
        return categories, generic, generic.copy()
    refined = np.empty(signals.shape[0])
    for category in np.unique(categories):
        rows = categories == category
        refined[rows] = ads(signals[rows], bank.for_category(str(category), pooled))
    return categories, generic, refined


def two_stage_scores(signals, bank, thresholds: Thresholds, generic_only=False, pooled=False):
    """
    Vectorized two-stage detection of normalized (n, 3) signals.

    Input:
        signals (np.ndarray): Normalized signals.
        bank (WeightBank): Learned signal weights.
        thresholds (Thresholds): Calibrated thresholds.
        generic_only (bool): Score with the generic weights in both stages.
        pooled (bool): Use category weights learned on pooled category data.

    Returns:
        tuple: (y_detect, categories, ads_generic, ads_refined) arrays.
    """
    thresholds.require_calibrated()
    categories, generic, refined = refined_scores(
        signals, bank, thresholds.tau_anomaly, generic_only, pooled
    )
    y_detect = (refined > thresholds.tau_detect).astype(int)
    return y_detect, categories, generic, refined


def two_stage_detect(
    signals, bank, thresholds: Thresholds, generic_only=False, pooled=False
) -> DetectionResult:
    """
    Generic screening, category inference from the anomaly signal, then rescoring with the
    category weights. A sample is flagged when the refined score exceeds tau_detect.

    Raises:
        ConfigError: If tau_detect has not been calibrated.
    """
    signals = np.asarray(signals, dtype=float)
    y_detect, categories, generic, refined = two_stage_scores(
        signals[None, :], bank, thresholds, generic_only, pooled
    )
    return DetectionResult(
        y_detect=int(y_detect[0]),
        category=str(categories[0]),
        ads_generic=float(generic[0]),
        ads_refined=float(refined[0]),
        cascade_stage=3 if y_detect[0] else 2,
        anomaly_norm=float(signals[ANOMALY_INDEX]),
    )


def calibrate_tau_detect(clean_scores, target_fpr: float = TARGET_FPR) -> float:
    """
    Detection threshold at the (1 - target_fpr) quantile of clean refined scores, with linear
    interpolation between order statistics.

    Raises:
        DataError: If fewer than 100 clean scores are given.
    """
    clean_scores = np.asarray(clean_scores, dtype=float).ravel()
    if clean_scores.size < MIN_CALIBRATION_SAMPLES:
        raise DataError(
            f"Calibrating tau_detect needs at least {MIN_CALIBRATION_SAMPLES} clean scores, "
            f"got {clean_scores.size}."
        )
    if not 0 <= target_fpr < 1:
        raise ValueError("The target false positive rate must lie in [0, 1).")
    if np.ptp(clean_scores) == 0:
        warnings.warn("All clean scores are identical; the detection threshold is degenerate.")
        return float(clean_scores[0] + 1e-6)
    tau = float(np.quantile(clean_scores, 1.0 - target_fpr, method="linear"))
    logger.info("Calibrated tau_detect %.6f for target FPR %.3f", tau, target_fpr)
    return tau


def tune_tau_anomaly(anomaly_norm, is_distribution) -> float:
    """
    Sweep tau_anomaly over 0.05..0.95 (step 0.01) for the best category-inference accuracy on
    labeled validation attacks. Ties go to the value closest to 0.50.
    """
    anomaly_norm = np.asarray(anomaly_norm, dtype=float)
    is_distribution = np.asarray(is_distribution, dtype=bool)
    candidates = np.round(np.arange(5, 96) / 100.0, 2)
    accuracies = np.array([np.mean((anomaly_norm > t) == is_distribution) for t in candidates])
    best = accuracies.max()
    tied = candidates[accuracies == best]
    tau = float(tied[np.argmin(np.abs(tied - TAU_ANOMALY))])
    logger.info("Tuned tau_anomaly %.2f (category accuracy %.4f)", tau, best)
    return tau


@dataclass
class CascadeCounters:
    """
    Aggregate routing counters. Stage 1 counts fast exits only; a stage-3 sample also counts in
    stage 2.
    """

    stage_counts: dict = field(default_factory=lambda: {1: 0, 2: 0, 3: 0})
    mahalanobis_count: int = 0
    adaptive_weighting_count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, stage1=0, stage2=0, stage3=0, mahalanobis=0, adaptive=0):
        with self._lock:
            self.stage_counts[1] += int(stage1)
            self.stage_counts[2] += int(stage2)
            self.stage_counts[3] += int(stage3)
            self.mahalanobis_count += int(mahalanobis)
            self.adaptive_weighting_count += int(adaptive)

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "stage_counts": {str(k): v for k, v in self.stage_counts.items()},
                "mahalanobis_count": self.mahalanobis_count,
                "adaptive_weighting_count": self.adaptive_weighting_count,
            }


def fast_path_mask(ens_prob, disagreement, thresholds: Thresholds) -> np.ndarray:
    """Samples confident enough to skip detection."""
    ens_prob = np.atleast_2d(ens_prob)
    return (ens_prob.max(axis=1) > thresholds.tau_conf) & (
        np.atleast_1d(disagreement) < thresholds.tau_disagree
    )


def cascade_route(
    ensemble_out,
    x,
    scorer,
    bank,
    thresholds: Thresholds,
    counters: CascadeCounters = None,
    generic_only: bool = False,
    pooled: bool = False,
) -> DetectionResult:
    """
    Route one sample through the cascade.

    Stage 1 returns immediately, without the anomaly signal, for a confident low-disagreement
    ensemble output. Otherwise the sample runs two-stage detection and ends in stage 2 (clean)
    or stage 3 (detected, deep verification).

    Input:
        ensemble_out (EnsembleOutput): The ensemble forward pass of ``x``.
        x (np.ndarray): The standardized feature vector.
        scorer (SignalScorer): Signal computation with the fitted normalizer.
        bank (WeightBank): Learned signal weights.
        thresholds (Thresholds): Calibrated thresholds.
        counters (CascadeCounters): Optional routing counters to update.
        generic_only (bool): Score with the generic weights in both stages.
        pooled (bool): Use category weights learned on pooled category data.
    """
    thresholds.require_calibrated()
    counters = counters if counters is not None else CascadeCounters()
    if fast_path_mask(ensemble_out.ens_prob, ensemble_out.disagreement, thresholds)[0]:
        counters.add(stage1=1)
        return DetectionResult(0, None, 0.0, 0.0, 1)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("cascade_route expects a single feature vector.")
    signals = scorer.normalized(_single_batch(ensemble_out), x[None, :])[0]
    result = two_stage_detect(signals, bank, thresholds, generic_only, pooled)
    counters.add(stage2=1, stage3=result.y_detect, mahalanobis=1)
    return result


def _single_batch(ensemble_out):
    return EnsembleBatch(
        prob_tensor=ensemble_out.prob_matrix[None, :, :],
        votes=np.asarray(ensemble_out.votes)[None, :],
        ens_prob=ensemble_out.ens_prob[None, :],
        ens_vote=np.array([ensemble_out.ens_vote]),
        disagreement=np.array([ensemble_out.disagreement]),
    )
