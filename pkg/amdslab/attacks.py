"""
Adversarial attack generators.

Gradient attacks (FGSM, PGD in the L-infinity and L2 norms, Carlini-Wagner L2) take input
gradients from a differentiable surrogate member. SPSA only queries probabilities, so it runs
against any model, including the whole ensemble. The distribution attacks perturb features
statistically (Gaussian injection, systematic morphing). The two adaptive adversaries work
against the full defense and try to keep the suspicion score low while misclassifying.
"""

import logging
import os
import typing
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .config import (
    ADAPTIVE_BASELINE_ITERS,
    ADAPTIVE_IMPROVED_ITERS,
    ASR_GATE,
    CW_BINARY_SEARCH_ITERS,
    CW_C_RANGE,
    CW_KAPPA,
    CW_LEARNING_RATE,
    CW_STEPS,
    DISTRIBUTION_ATTACKS,
    DISTRIBUTION_SCALE,
    EPSILON,
    GRADIENT_ATTACKS,
    PGD_STEP_SIZE,
    PGD_STEPS,
    SPSA_DELTA,
    SPSA_QUERIES,
    SPSA_STEPS,
    VALID_ATTACKS,
)
from .exceptions import DataError, ManifestError, UndefinedMetricError
from .model import ensemble_forward_batch
from .output import atomic_target, read_json, write_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackSpec:
    """
    Attack kind and hyperparameters.
    """

    kind: str
    epsilon: float = EPSILON
    steps: int = PGD_STEPS
    step_size: float = PGD_STEP_SIZE
    binary_search_iters: int = CW_BINARY_SEARCH_ITERS
    kappa: float = CW_KAPPA
    cw_steps: int = CW_STEPS
    cw_learning_rate: float = CW_LEARNING_RATE
    queries: int = SPSA_QUERIES
    delta: float = SPSA_DELTA
    spsa_steps: int = SPSA_STEPS
    spsa_step_size: float = None
    scale: float = DISTRIBUTION_SCALE
    seed: int = 0

    def __post_init__(self):
        if self.kind not in VALID_ATTACKS:
            raise ValueError(f"Select an attack from the list: {', '.join(VALID_ATTACKS)}.")
        if self.kind in GRADIENT_ATTACKS and not self.epsilon > 0:
            raise ValueError("Gradient attacks need a positive epsilon.")
        if self.kind in DISTRIBUTION_ATTACKS and not self.scale > 0:
            raise ValueError("Distribution attacks need a positive scale.")

    @classmethod
    def from_config(cls, kind: str, attacks, seed: int) -> "AttackSpec":
        return cls(
            kind=kind,
            epsilon=attacks.epsilon,
            steps=attacks.pgd_steps,
            step_size=attacks.pgd_step_size,
            binary_search_iters=attacks.cw_binary_search,
            kappa=attacks.cw_kappa,
            cw_steps=attacks.cw_steps,
            cw_learning_rate=attacks.cw_learning_rate,
            queries=attacks.spsa_queries,
            delta=attacks.spsa_delta,
            spsa_steps=attacks.spsa_steps,
            spsa_step_size=attacks.spsa_step_size,
            scale=attacks.scale,
            seed=seed,
        )

    def params(self) -> dict:
        """Hyperparameters relevant to this kind."""
        values = asdict(self)
        match self.kind:
            case "fgsm":
                keys = ["epsilon"]
            case "pgd_linf" | "pgd_l2":
                keys = ["epsilon", "steps", "step_size"]
            case "cw_l2":
                keys = ["binary_search_iters", "kappa", "cw_steps", "cw_learning_rate"]
            case "spsa":
                keys = ["epsilon", "queries", "delta", "spsa_steps", "spsa_step_size"]
            case _:
                keys = ["scale"]
        return {key: values[key] for key in keys}


@dataclass
class AttackBatch:
    """
    Adversarial rows generated from a split.

    Attributes:
        kind (str): Attack kind.
        adv_features (np.ndarray): Adversarial feature rows.
        origin_indices (np.ndarray): Row of the source split every adversarial row came from.
        labels (np.ndarray): True labels of the source rows.
        asr (float): Attack success rate against the standard ensemble.
        below_gate (bool): Whether the ASR misses the effectiveness gate.
        params (dict): Attack hyperparameters.
        seed (int): Attack seed.
    """

    kind: str
    adv_features: np.ndarray
    origin_indices: np.ndarray
    labels: np.ndarray
    asr: float = None
    below_gate: bool = None
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.adv_features = np.atleast_2d(np.asarray(self.adv_features, dtype=float))
        self.origin_indices = np.asarray(self.origin_indices, dtype=int)
        self.labels = np.asarray(self.labels, dtype=int)
        if not np.all(np.isfinite(self.adv_features)):
            raise DataError(f"The {self.kind} batch contains non-finite features.")
        if self.adv_features.shape[0] != self.origin_indices.shape[0]:
            raise DataError("Every adversarial row needs an origin index.")

    def __len__(self):
        return self.adv_features.shape[0]

    def save(self, directory: str, schema: list):
        """
        Write ``<kind>.csv`` and the ``<kind>.json`` sidecar to a directory.
        """
        frame = pd.DataFrame(self.adv_features, columns=schema)
        frame["label"] = self.labels
        with atomic_target(os.path.join(directory, f"{self.kind}.csv")) as temp_path:
            frame.to_csv(temp_path, index=False, float_format="%.17g")
        write_json(
            {
                "kind": self.kind,
                "params": self.params,
                "seed": self.seed,
                "asr": self.asr,
                "below_gate": self.below_gate,
                "origin_indices": self.origin_indices.tolist(),
            },
            os.path.join(directory, f"{self.kind}.json"),
        )

    @classmethod
    def load(cls, directory: str, kind: str, schema: list) -> "AttackBatch":
        """
        Raises:
            ManifestError: If the batch files are missing.
        """
        csv_path = os.path.join(directory, f"{kind}.csv")
        json_path = os.path.join(directory, f"{kind}.json")
        if not os.path.isfile(csv_path) or not os.path.isfile(json_path):
            raise ManifestError(f"Attack batch '{kind}' not found in {directory}.")
        frame = pd.read_csv(csv_path, header=0)
        sidecar = read_json(json_path)
        return cls(
            kind=kind,
            adv_features=frame[schema].to_numpy(dtype=float),
            origin_indices=sidecar["origin_indices"],
            labels=frame["label"].to_numpy(dtype=int),
            asr=sidecar.get("asr"),
            below_gate=sidecar.get("below_gate"),
            params=sidecar.get("params", {}),
            seed=sidecar.get("seed", 0),
        )


def _as_rows(features, labels):
    features = np.asarray(features, dtype=float)
    single = features.ndim == 1
    features = np.atleast_2d(features)
    labels = np.broadcast_to(np.asarray(labels, dtype=int), (features.shape[0],))
    return features, labels, single


def _project_linf(features, origin, epsilon):
    return np.clip(features, origin - epsilon, origin + epsilon)


def _project_l2(features, origin, epsilon):
    offset = features - origin
    norms = np.linalg.norm(offset, axis=1, keepdims=True)
    factor = np.minimum(1.0, epsilon / np.where(norms > 0, norms, 1.0))
    return origin + offset * factor


def fgsm(surrogate, features, labels, epsilon: float = EPSILON):
    """
    Single-step L-infinity attack ``x + epsilon * sign(grad)``, with sign(0) = 0.

    Raises:
        NotDifferentiableError: If the surrogate is tree-based.
    """
    origin, labels, single = _as_rows(features, labels)
    adv = origin + epsilon * np.sign(surrogate.input_gradient(origin, labels))
    return adv[0] if single else adv


def pgd(
    surrogate,
    features,
    labels,
    epsilon: float = EPSILON,
    steps: int = PGD_STEPS,
    step_size: float = PGD_STEP_SIZE,
    norm: str = "linf",
):
    """
    Projected gradient ascent on the cross-entropy loss.

    Every step moves by ``step_size`` along the gradient sign (L-infinity) or the normalized
    gradient (L2) and is projected back onto the epsilon ball around the clean input.

    Raises:
        ValueError: If the norm is not 'linf' or 'l2'.
        NotDifferentiableError: If the surrogate is tree-based.
    """
    if norm not in ("linf", "l2"):
        raise ValueError("The PGD norm must be 'linf' or 'l2'.")
    origin, labels, single = _as_rows(features, labels)
    adv = origin.copy()
    for _ in range(steps):
        grad = surrogate.input_gradient(adv, labels)
        if norm == "linf":
            adv = _project_linf(adv + step_size * np.sign(grad), origin, epsilon)
        else:
            grad_norm = np.linalg.norm(grad, axis=1, keepdims=True)
            adv = adv + step_size * grad / np.where(grad_norm > 0, grad_norm, 1.0)
            adv = _project_l2(adv, origin, epsilon)
    return adv[0] if single else adv


def _margin(surrogate, features, labels):
    logits = surrogate.logits(features)
    rows = np.arange(features.shape[0])
    true_logit = logits[rows, labels]
    others = logits.copy()
    others[rows, labels] = -np.inf
    runner_up = others.argmax(axis=1)
    return true_logit - others[rows, runner_up], runner_up


def _cw_success(surrogate, features, labels, kappa):
    margin, _ = _margin(surrogate, features, labels)
    predicted = surrogate.logits(features).argmax(axis=1)
    return (margin <= -kappa) & (predicted != labels)


def cw_l2(
    surrogate,
    features,
    labels,
    binary_search_iters: int = CW_BINARY_SEARCH_ITERS,
    kappa: float = CW_KAPPA,
    steps: int = CW_STEPS,
    learning_rate: float = CW_LEARNING_RATE,
    c_range: tuple = CW_C_RANGE,
):
    """
    Carlini-Wagner L2 attack in raw feature space.

    Minimizes ``||x' - x||^2 + c * max(logit_y - max_{j != y} logit_j, -kappa)`` by plain
    gradient descent, with a per-sample geometric binary search for c over ``c_range``. The
    smallest successful perturbation is returned, or the clean input when none is found.
    Inputs that are already misclassified are returned unchanged.

    Raises:
        NotDifferentiableError: If the surrogate is tree-based.
    """
    origin, labels, single = _as_rows(features, labels)
    n = origin.shape[0]
    best = origin.copy()
    best_norm = np.full(n, np.inf)
    already = _cw_success(surrogate, origin, labels, kappa)
    best_norm[already] = 0.0
    low = np.full(n, float(c_range[0]))
    high = np.full(n, float(c_range[1]))
    const = np.sqrt(low * high)
    rows = np.arange(n)
    for _ in range(binary_search_iters):
        adv = origin.copy()
        found = np.zeros(n, dtype=bool)
        for _ in range(steps):
            margin, runner_up = _margin(surrogate, adv, labels)
            active = (margin > -kappa).astype(float)
            cotangent = np.zeros((n, surrogate.class_count))
            cotangent[rows, labels] = active
            cotangent[rows, runner_up] -= active
            grad = 2.0 * (adv - origin) + const[:, None] * surrogate.logit_vjp(adv, cotangent)
            adv = adv - learning_rate * grad
            success = _cw_success(surrogate, adv, labels, kappa) & ~already
            norms = np.sum((adv - origin) ** 2, axis=1)
            improved = success & (norms < best_norm)
            best[improved] = adv[improved]
            best_norm[improved] = norms[improved]
            found |= success
        high = np.where(found, const, high)
        low = np.where(found, low, const)
        const = np.sqrt(low * high)
    return best[0] if single else best


def spsa_gradient(loss_fn, features, delta: float, pairs: int, rng) -> np.ndarray:
    """
    Simultaneous-perturbation gradient estimate averaged over Rademacher directions u:
    ``(loss(x + delta u) - loss(x - delta u)) / (2 delta) * u``.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    estimate = np.zeros_like(features)
    for _ in range(pairs):
        direction = rng.choice([-1.0, 1.0], size=features.shape)
        diff = loss_fn(features + delta * direction) - loss_fn(features - delta * direction)
        estimate += (diff / (2.0 * delta))[:, None] * direction
    return estimate / pairs


def spsa(
    model,
    features,
    labels,
    epsilon: float = EPSILON,
    queries: int = SPSA_QUERIES,
    delta: float = SPSA_DELTA,
    steps: int = SPSA_STEPS,
    step_size: float = None,
    rng=None,
):
    """
    Black-box attack with SPSA gradient estimates of the cross-entropy loss.

    The query budget is spread over ``steps`` ascent iterations, each using
    ``queries // (2 * steps)`` perturbation pairs (at least one). Each iteration takes a sign
    step of ``step_size`` (epsilon / 10 by default) and projects onto the L-infinity ball.

    Input:
        model: Anything with ``predict_proba``; gradients are never requested.

    Raises:
        ValueError: If fewer than 2 queries are allowed.
    """
    if queries < 2:
        raise ValueError("SPSA needs at least 2 queries.")
    rng = np.random.default_rng() if rng is None else rng
    origin, labels, single = _as_rows(features, labels)
    step_size = epsilon / 10.0 if step_size is None else step_size
    pairs = max(1, queries // (2 * steps))

    def loss_fn(points):
        proba = model.predict_proba(points)
        return -np.log(np.clip(proba[np.arange(points.shape[0]), labels], 1e-12, None))

    adv = origin.copy()
    for _ in range(steps):
        grad = spsa_gradient(loss_fn, adv, delta, pairs, rng)
        adv = _project_linf(adv + step_size * np.sign(grad), origin, epsilon)
    return adv[0] if single else adv


def injection(features, feature_sigma, scale: float = DISTRIBUTION_SCALE, rng=None):
    """Add per-feature Gaussian noise with standard deviation ``scale * sigma_i``."""
    rng = np.random.default_rng() if rng is None else rng
    features = np.asarray(features, dtype=float)
    noise = rng.standard_normal(features.shape) * (scale * np.asarray(feature_sigma, dtype=float))
    return features + noise


def morphing(features, feature_sigma, scale: float = DISTRIBUTION_SCALE):
    """Shift every feature by ``scale * sigma_i``."""
    return np.asarray(features, dtype=float) + scale * np.asarray(feature_sigma, dtype=float)


class SystemHandle(typing.Protocol):
    """White-box view of the full defense used by the adaptive adversaries."""

    def ads_refined(self, features: np.ndarray) -> np.ndarray: ...

    def predict_class(self, features: np.ndarray) -> np.ndarray: ...


@dataclass
class AdaptiveResult:
    adv_features: np.ndarray
    success: np.ndarray
    ads_start: np.ndarray
    ads_final: np.ndarray

    @property
    def ads_reduction(self) -> np.ndarray:
        """Relative drop of the refined score from the starting point (0 when it starts at 0)."""
        start = np.where(self.ads_start > 0, self.ads_start, 1.0)
        return np.where(self.ads_start > 0, (self.ads_start - self.ads_final) / start, 0.0)


def adaptive_attack(
    handle: SystemHandle,
    features,
    labels,
    variant: str = "improved",
    epsilon: float = EPSILON,
    iters: int = None,
    rng=None,
    surrogate=None,
    delta: float = SPSA_DELTA,
    pairs: int = 2,
) -> AdaptiveResult:
    """
    Adversary that tries to misclassify while keeping the refined suspicion score low.

    The baseline variant starts at the clean input and tries random directions, accepting a
    step only if the system misclassifies it and the score does not rise. The improved variant
    starts at the FGSM point of the surrogate, estimates the score gradient by simultaneous
    perturbation and descends along it, accepting a step when the result is misclassified and
    either the score does not rise or the current point is still classified correctly. Both
    stay inside the L-infinity ball of radius epsilon around the clean input.

    Input:
        handle (SystemHandle): The defended system.
        features (np.ndarray): Clean inputs.
        labels (np.ndarray): True labels.
        variant (str): 'baseline' or 'improved'.
        epsilon (float): Total budget around the clean input.
        iters (int): Iterations; 200 (baseline) or 50 (improved) by default.
        rng (np.random.Generator): Random source.
        surrogate (TrainedModel): Differentiable member for the FGSM start (improved only).
        delta (float): Finite-difference radius of the score gradient estimate.
        pairs (int): Perturbation pairs per gradient estimate.

    Returns:
        AdaptiveResult: Adversarial rows, success flags and the score at start and end.
    """
    if variant not in ("baseline", "improved"):
        raise ValueError("The adaptive variant must be 'baseline' or 'improved'.")
    rng = np.random.default_rng() if rng is None else rng
    origin, labels, _ = _as_rows(features, labels)
    if variant == "baseline":
        iters = ADAPTIVE_BASELINE_ITERS if iters is None else iters
        current = origin.copy()
    else:
        iters = ADAPTIVE_IMPROVED_ITERS if iters is None else iters
        if surrogate is None:
            raise ValueError("The improved adaptive attack needs a differentiable surrogate.")
        current = fgsm(surrogate, origin, labels, epsilon) if epsilon > 0 else origin.copy()
    ads_current = handle.ads_refined(current)
    ads_start = ads_current.copy()
    mis_current = handle.predict_class(current) != labels
    step = epsilon / 10.0
    for _ in range(iters if epsilon > 0 else 0):
        if variant == "baseline":
            direction = rng.standard_normal(origin.shape)
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            candidate = _project_linf(current + epsilon * direction, origin, epsilon)
        else:
            grad = spsa_gradient(handle.ads_refined, current, delta, pairs, rng)
            candidate = _project_linf(current - step * np.sign(grad), origin, epsilon)
        ads_candidate = handle.ads_refined(candidate)
        mis_candidate = handle.predict_class(candidate) != labels
        if variant == "baseline":
            accept = mis_candidate & (ads_candidate <= ads_current)
        else:
            accept = mis_candidate & ((ads_candidate <= ads_current) | ~mis_current)
        current[accept] = candidate[accept]
        ads_current[accept] = ads_candidate[accept]
        mis_current[accept] = True
    success = handle.predict_class(current) != labels
    return AdaptiveResult(current, success, ads_start, ads_current)


def validate_asr(models, clean_features, adv_features, labels) -> float:
    """
    Fraction of originally correctly classified samples that the standard ensemble misclassifies
    after the attack.

    Raises:
        UndefinedMetricError: If the ensemble classifies no clean sample correctly.
    """
    labels = np.asarray(labels, dtype=int)
    clean_votes = ensemble_forward_batch(models, clean_features).ens_vote
    correct = clean_votes == labels
    if not correct.any():
        raise UndefinedMetricError("ASR is undefined: no clean sample is classified correctly.")
    adv_votes = ensemble_forward_batch(models, np.asarray(adv_features)[correct]).ens_vote
    return float(np.mean(adv_votes != labels[correct]))


def select_attack_indices(data, source: str, count: int, benign_label: int, rng) -> np.ndarray:
    """
    Sorted rows to attack: all classes ('all') or non-benign classes only ('malicious'),
    subsampled to at most ``count`` rows.
    """
    if source == "malicious":
        pool = np.flatnonzero(data.labels != benign_label)
    else:
        pool = np.arange(data.n_samples)
    if count is not None and pool.size > count:
        pool = rng.choice(pool, size=count, replace=False)
    return np.sort(pool)


def generate_attack(spec: AttackSpec, data, indices, surrogate, target) -> AttackBatch:
    """
    Run one attack on selected rows of a standardized split.

    Input:
        spec (AttackSpec): Attack kind and hyperparameters.
        data (LabeledDataset): Source split.
        indices (np.ndarray): Rows to attack.
        surrogate (TrainedModel): Differentiable member for the gradient attacks.
        target: Model queried by SPSA (anything with ``predict_proba``).

    Returns:
        AttackBatch: The adversarial rows (ASR not yet computed).
    """
    rng = np.random.default_rng(spec.seed)
    origin = data.features[indices]
    labels = data.labels[indices]
    match spec.kind:
        case "fgsm":
            adv = fgsm(surrogate, origin, labels, spec.epsilon)
        case "pgd_linf":
            adv = pgd(surrogate, origin, labels, spec.epsilon, spec.steps, spec.step_size, "linf")
        case "pgd_l2":
            adv = pgd(surrogate, origin, labels, spec.epsilon, spec.steps, spec.step_size, "l2")
        case "cw_l2":
            adv = cw_l2(
                surrogate,
                origin,
                labels,
                spec.binary_search_iters,
                spec.kappa,
                spec.cw_steps,
                spec.cw_learning_rate,
            )
        case "spsa":
            adv = spsa(
                target,
                origin,
                labels,
                spec.epsilon,
                spec.queries,
                spec.delta,
                spec.spsa_steps,
                spec.spsa_step_size,
                rng,
            )
        case "injection":
            adv = injection(origin, data.space_sigma(), spec.scale, rng)
        case "morphing":
            adv = morphing(origin, data.space_sigma(), spec.scale)
        case _:
            raise ValueError(f"Attack '{spec.kind}' cannot be generated in batch.")
    return AttackBatch(
        kind=spec.kind,
        adv_features=np.atleast_2d(adv),
        origin_indices=indices,
        labels=labels,
        params=spec.params(),
        seed=spec.seed,
    )


def generate_suite(
    data,
    models,
    surrogate,
    target,
    attacks,
    kinds: list,
    seeds: dict,
    sources: dict,
    count: int,
    cw_count: int,
    benign_label: int = 0,
    asr_gate: float = ASR_GATE,
) -> dict:
    """
    Generate and validate a batch for every attack kind.

    Weak attacks (ASR at or below the gate) are flagged with ``below_gate`` and kept.

    Input:
        data (LabeledDataset): Source split.
        models (list): Ensemble members used to validate the ASR.
        surrogate (TrainedModel): Differentiable member for the gradient attacks.
        target: Model queried by SPSA.
        attacks (AttacksConfig): Attack hyperparameters.
        kinds (list): Attack kinds to generate.
        seeds (dict): Seed per kind.
        sources (dict): Row source per kind ('all' or 'malicious').
        count (int): Rows per attack.
        cw_count (int): Rows for the Carlini-Wagner attack.

    Returns:
        dict: Kind to AttackBatch, in the order of ``kinds``.
    """
    suite = {}
    for kind in kinds:
        spec = AttackSpec.from_config(kind, attacks, seeds[kind])
        rng = np.random.default_rng(spec.seed)
        size = cw_count if kind == "cw_l2" else count
        indices = select_attack_indices(data, sources[kind], size, benign_label, rng)
        batch = generate_attack(spec, data, indices, surrogate, target)
        try:
            batch.asr = validate_asr(models, data.features[indices], batch.adv_features, batch.labels)
        except UndefinedMetricError:
            logger.warning("ASR of %s is undefined", kind)
            batch.asr = None
        batch.below_gate = batch.asr is None or batch.asr <= asr_gate
        logger.info(
            "Attack %s: %d rows, ASR %s%s",
            kind,
            len(batch),
            "n/a" if batch.asr is None else f"{batch.asr:.3f}",
            " (below gate)" if batch.below_gate else "",
        )
        suite[kind] = batch
    return suite
