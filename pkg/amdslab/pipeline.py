"""
End-to-end training and inference of the defended system.

``train`` runs the four training stages (models with the accuracy gate, attack generation with
the ASR gate, weight learning, threshold calibration) and returns a ``SystemManifest``.
``infer`` and ``infer_batch`` route samples through the cascade, two-stage detection and the
attack-adaptive vote, and return one ``DualOutput`` (detection and class) per sample.
"""

import logging
import os
import time
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import joblib
import numpy as np

from .attacks import generate_suite
from .config import (
    ATTACK_CATEGORIES,
    CATEGORIES,
    ENSEMBLE_SIZE,
    FORMAT_VERSION,
    VALID_ATTACKS,
)
from .detector import (
    ANOMALY_INDEX,
    CascadeCounters,
    Thresholds,
    calibrate_tau_detect,
    cascade_route,
    fast_path_mask,
    refined_scores,
    tune_tau_anomaly,
    two_stage_detect,
    two_stage_scores,
)
from .exceptions import ConfigError, DataError, ManifestError
from .model import (
    StandardEnsemble,
    ensemble_forward_batch,
    ensemble_specs,
    fit_ensemble,
    select_surrogate,
    weighted_vote,
)
from .output import read_json, write_json
from .reader import (
    BenignDistribution,
    Scaler,
    SplitSpec,
    benign_stats,
    dataset_fingerprint,
    load_dataset,
    load_model,
    load_split,
    prepare_splits,
    save_split,
    write_scaler,
)
from .signals import SignalNormalizer, SignalScorer
from .weights import (
    ModelWeightBank,
    WeightBank,
    auc,
    ads,
    blend,
    category_average,
    category_confidence,
    learn_weights,
    model_category_weights,
    signal_aucs,
)

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
SCALER_FILE = "scaler.json"
MODELS_DIR = "models"
_MANIFEST_KEYS = [
    "format_version",
    "model_files",
    "benign",
    "normalizer",
    "weights",
    "model_weights",
    "thresholds",
    "metadata",
]


@dataclass
class SystemManifest:
    """
    Everything inference needs: the six members, the scaler, the benign distribution, the
    signal normalizer, the learned weights, the thresholds and the training metadata.

    Raises:
        ManifestError: If a component is missing or tau_detect is not calibrated.
    """

    models: list
    scaler: Scaler
    benign: BenignDistribution
    normalizer: SignalNormalizer
    weight_bank: WeightBank
    model_weights: ModelWeightBank
    thresholds: Thresholds
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("scaler", "benign", "normalizer", "weight_bank", "model_weights", "thresholds"):
            if getattr(self, name) is None:
                raise ManifestError(f"The system manifest is missing its {name}.")
        if len(self.models) != ENSEMBLE_SIZE or any(m is None for m in self.models):
            raise ManifestError(f"The system manifest needs {ENSEMBLE_SIZE} trained models.")
        if self.thresholds.tau_detect is None:
            raise ManifestError("The system manifest has no calibrated tau_detect.")

    @property
    def n_features(self) -> int:
        return self.models[0].n_features

    @property
    def class_count(self) -> int:
        return self.models[0].class_count

    def scorer(self) -> SignalScorer:
        return SignalScorer(self.benign, self.normalizer)

    def save(self, directory: str):
        """
        Write ``manifest.json``, ``scaler.json`` and one joblib file per model to a directory.
        """
        model_files = []
        for index, model in enumerate(self.models):
            name = os.path.join(MODELS_DIR, f"{index}_{model.paradigm}.joblib")
            model.save_model(os.path.join(directory, name))
            model_files.append(name)
        write_scaler(self.scaler, os.path.join(directory, SCALER_FILE))
        write_json(
            {
                "format_version": FORMAT_VERSION,
                "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "model_files": model_files,
                "benign": self.benign.to_dict(),
                "normalizer": self.normalizer.to_dict(),
                "weights": self.weight_bank.to_dict(),
                "model_weights": self.model_weights.to_dict(),
                "thresholds": self.thresholds.to_dict(),
                "metadata": self.metadata,
            },
            os.path.join(directory, MANIFEST_FILE),
        )
        logger.info("Saved the system manifest to %s", directory)

    @classmethod
    def load(cls, directory: str) -> "SystemManifest":
        """
        Raises:
            ManifestError: If the directory lacks a component or has an unknown format.
        """
        manifest_path = os.path.join(directory, MANIFEST_FILE)
        scaler_path = os.path.join(directory, SCALER_FILE)
        if not os.path.isfile(manifest_path):
            raise ManifestError(f"No {MANIFEST_FILE} in {directory}; run train first.")
        if not os.path.isfile(scaler_path):
            raise ManifestError(f"No {SCALER_FILE} in {directory}.")
        payload = read_json(manifest_path)
        missing = [key for key in _MANIFEST_KEYS if key not in payload]
        if missing:
            raise ManifestError(f"The manifest lacks: {', '.join(missing)}.")
        if payload["format_version"] != FORMAT_VERSION:
            raise ManifestError(f"Unsupported manifest format {payload['format_version']}.")
        models = [load_model(os.path.join(directory, name)) for name in payload["model_files"]]
        return cls(
            models=models,
            scaler=Scaler.from_json(read_json(scaler_path)),
            benign=BenignDistribution.from_dict(payload["benign"]),
            normalizer=SignalNormalizer.from_dict(payload["normalizer"]),
            weight_bank=WeightBank.from_dict(payload["weights"]),
            model_weights=ModelWeightBank.from_dict(payload["model_weights"]),
            thresholds=Thresholds.from_dict(payload["thresholds"]),
            metadata=payload["metadata"],
        )


@dataclass
class DualOutput:
    y_detect: int
    y_class: int
    confidence_detect: float
    confidence_class: float
    inferred_category: str
    cascade_stage: int

    def to_record(self) -> dict:
        return {
            "y_detect": int(self.y_detect),
            "y_class": int(self.y_class),
            "conf_detect": float(self.confidence_detect),
            "conf_class": float(self.confidence_class),
            "category": self.inferred_category,
            "stage": int(self.cascade_stage),
        }


@dataclass(frozen=True)
class InferenceOptions:
    """
    Switches of the inference path.

    Attributes:
        cascade (bool): Let confident samples exit at stage 1.
        detection (bool): Run detection at all; without it every sample gets the plain vote.
        generic_only (bool): Score both detection stages with the generic weights.
        uniform_voting (bool): Keep the plain ensemble vote for detected samples.
        pooled_categories (bool): Use category weights learned on pooled category data instead of
            the average of the attack-specific weights.
    """

    cascade: bool = True
    detection: bool = True
    generic_only: bool = False
    uniform_voting: bool = False
    pooled_categories: bool = False

    @classmethod
    def from_toggle(cls, toggle: str) -> "InferenceOptions":
        """
        Raises:
            ConfigError: If the toggle is unknown.
        """
        match toggle:
            case "full":
                return cls()
            case "no_cascade":
                return cls(cascade=False)
            case "no_detection":
                return cls(detection=False)
            case "generic_weights_only":
                return cls(generic_only=True)
            case "uniform_model_voting":
                return cls(uniform_voting=True)
            case "no_attack_specific_weights":
                return cls(pooled_categories=True)
            case _:
                raise ConfigError(f"Unknown inference toggle '{toggle}'.")


ABLATION_TOGGLES = ["generic_weights_only", "uniform_model_voting", "no_attack_specific_weights"]


@dataclass
class InferenceBatch:
    outputs: list
    instrumentation: dict

    def __len__(self):
        return len(self.outputs)

    @property
    def y_detect(self) -> np.ndarray:
        return np.array([o.y_detect for o in self.outputs], dtype=int)

    @property
    def y_class(self) -> np.ndarray:
        return np.array([o.y_class for o in self.outputs], dtype=int)

    @property
    def categories(self) -> list:
        return [o.inferred_category for o in self.outputs]


def confidence_detect(ads_refined: float, tau_detect: float) -> float:
    """``min(1, ads_refined / tau_detect)``."""
    if tau_detect <= 0:
        return 1.0 if ads_refined > tau_detect else 0.0
    return float(min(1.0, max(0.0, ads_refined / tau_detect)))


def _adaptive_vote(prob_matrix, category, anomaly_norm, manifest) -> int:
    thresholds = manifest.thresholds
    confidence = float(
        category_confidence(anomaly_norm, thresholds.tau_anomaly, thresholds.conf_scale)
    )
    model_weights = blend(
        manifest.model_weights.for_category(category),
        confidence,
        thresholds.conf_cutoff,
        inclusive=False,
    )
    return weighted_vote(prob_matrix, model_weights)


def _check_width(features: np.ndarray, manifest: SystemManifest):
    if features.shape[-1] != manifest.n_features:
        raise DataError(f"Expected {manifest.n_features} features, got {features.shape[-1]}.")


def infer(x, manifest: SystemManifest, options: InferenceOptions = None, counters=None) -> DualOutput:
    """
    Classify one standardized flow and decide whether it is adversarial.

    A confident, low-disagreement sample leaves at stage 1 with the plain vote. Otherwise the
    sample runs two-stage detection; a clean verdict also keeps the plain vote (stage 2), while
    a detected sample gets the vote weighted for its inferred attack category (stage 3).

    Input:
        x (np.ndarray): One standardized feature vector.
        manifest (SystemManifest): The trained system.
        options (InferenceOptions): Inference switches; the full system by default.
        counters (CascadeCounters): Optional routing counters to update.

    Returns:
        DualOutput: Detection verdict, class and their confidences.

    Raises:
        DataError: If the feature width does not match the trained width.
    """
    options = options or InferenceOptions()
    counters = counters if counters is not None else CascadeCounters()
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("infer expects a single feature vector; use infer_batch for matrices.")
    _check_width(x, manifest)
    batch = ensemble_forward_batch(manifest.models, x[None, :])
    out = batch[0]
    confidence_class = float(out.ens_prob.max())
    if not options.detection:
        counters.add(stage1=1)
        return DualOutput(0, out.ens_vote, 0.0, confidence_class, None, 1)
    scorer = manifest.scorer()
    if options.cascade:
        result = cascade_route(
            out,
            x,
            scorer,
            manifest.weight_bank,
            manifest.thresholds,
            counters,
            options.generic_only,
            options.pooled_categories,
        )
    else:
        signals = scorer.normalized(batch, x[None, :])[0]
        result = two_stage_detect(
            signals,
            manifest.weight_bank,
            manifest.thresholds,
            options.generic_only,
            options.pooled_categories,
        )
        counters.add(stage2=1, stage3=result.y_detect, mahalanobis=1)
    y_class = out.ens_vote
    if result.y_detect and not options.uniform_voting:
        y_class = _adaptive_vote(out.prob_matrix, result.category, result.anomaly_norm, manifest)
        counters.add(adaptive=1)
    return DualOutput(
        y_detect=result.y_detect,
        y_class=int(y_class),
        confidence_detect=confidence_detect(result.ads_refined, manifest.thresholds.tau_detect),
        confidence_class=confidence_class,
        inferred_category=result.category,
        cascade_stage=result.cascade_stage,
    )


def infer_batch(features, manifest: SystemManifest, options: InferenceOptions = None) -> InferenceBatch:
    """
    Vectorized ``infer`` over a matrix of standardized flows.

    The instrumentation holds the cumulative stage counts, the number of Mahalanobis
    evaluations and adaptive-weighting applications, the mean latency per sample and the
    throughput.

    Raises:
        DataError: If the feature width does not match the trained width.
    """
    options = options or InferenceOptions()
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(0, manifest.n_features) if features.size == 0 else features[None, :]
    _check_width(features, manifest)
    counters = CascadeCounters()
    n = features.shape[0]
    start = time.perf_counter()
    outputs = []
    if n:
        outputs = _route_batch(features, manifest, options, counters)
    elapsed = time.perf_counter() - start
    instrumentation = {
        **counters.to_dict(),
        "n_samples": n,
        "latency_ms_per_sample": elapsed * 1000.0 / n if n else 0.0,
        "throughput": n / elapsed if n and elapsed > 0 else 0.0,
    }
    return InferenceBatch(outputs, instrumentation)


def _route_batch(features, manifest, options, counters) -> list:
    thresholds = manifest.thresholds
    batch = ensemble_forward_batch(manifest.models, features)
    n = len(batch)
    y_detect = np.zeros(n, dtype=int)
    y_class = batch.ens_vote.copy()
    stages = np.ones(n, dtype=int)
    refined = np.zeros(n)
    categories = [None] * n
    if not options.detection:
        counters.add(stage1=n)
    else:
        if options.cascade:
            fast = fast_path_mask(batch.ens_prob, batch.disagreement, thresholds)
        else:
            fast = np.zeros(n, dtype=bool)
        rest = np.flatnonzero(~fast)
        adaptive = 0
        if rest.size:
            signals = manifest.scorer().normalized(batch.take(rest), features[rest])
            detected, rest_categories, _, rest_refined = two_stage_scores(
                signals,
                manifest.weight_bank,
                thresholds,
                options.generic_only,
                options.pooled_categories,
            )
            y_detect[rest] = detected
            refined[rest] = rest_refined
            stages[rest] = 2 + detected
            for j, i in enumerate(rest):
                categories[i] = str(rest_categories[j])
                if detected[j] and not options.uniform_voting:
                    y_class[i] = _adaptive_vote(
                        batch.prob_tensor[i], categories[i], signals[j, ANOMALY_INDEX], manifest
                    )
                    adaptive += 1
        counters.add(
            stage1=int(fast.sum()),
            stage2=rest.size,
            stage3=int(y_detect.sum()),
            mahalanobis=rest.size,
            adaptive=adaptive,
        )
    return [
        DualOutput(
            y_detect=int(y_detect[i]),
            y_class=int(y_class[i]),
            confidence_detect=confidence_detect(refined[i], thresholds.tau_detect),
            confidence_class=float(batch.ens_prob[i].max()),
            inferred_category=categories[i],
            cascade_stage=int(stages[i]),
        )
        for i in range(n)
    ]


class DefendedSystem:
    """
    White-box handle on a trained system for adaptive adversaries and score-based evaluation.
    """

    def __init__(self, manifest: SystemManifest, options: InferenceOptions = None):
        self.manifest = manifest
        self.options = options or InferenceOptions()
        self.scorer = manifest.scorer()

    def signals(self, features) -> np.ndarray:
        """Normalized (n, 3) signals of every row."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        batch = ensemble_forward_batch(self.manifest.models, features)
        return self.scorer.normalized(batch, features)

    def ads_refined(self, features) -> np.ndarray:
        """Refined suspicion score of every row, with the cascade bypassed."""
        _, _, refined = refined_scores(
            self.signals(features),
            self.manifest.weight_bank,
            self.manifest.thresholds.tau_anomaly,
            self.options.generic_only,
            self.options.pooled_categories,
        )
        return refined

    def predict_class(self, features) -> np.ndarray:
        return infer_batch(features, self.manifest, self.options).y_class


def _weight_plan(suite: dict, weights_cfg) -> tuple:
    """
    Split attack kinds into the ones weights are learned from and the excluded ones.

    A category whose attacks are all below the ASR gate is learned from anyway.
    """
    excluded = set(weights_cfg.exclude_from_learning)
    if weights_cfg.exclude_below_gate:
        excluded |= {kind for kind, batch in suite.items() if batch.below_gate}
    for category in CATEGORIES:
        kinds = [kind for kind in suite if ATTACK_CATEGORIES[kind] == category]
        if kinds and all(kind in excluded for kind in kinds):
            restored = [kind for kind in kinds if kind not in weights_cfg.exclude_from_learning]
            if restored:
                warnings.warn(
                    f"Every {category} attack is below the ASR gate; learning weights from them."
                )
                excluded -= set(restored)
    included = [kind for kind in suite if kind not in excluded]
    return included, [kind for kind in suite if kind in excluded]


def _learn_optional(clean, adv, grid_step, refine_step):
    try:
        return learn_weights(clean, adv, grid_step, refine_step)
    except DataError:
        return None


def learn_weight_bank(clean_signals, adv_signals: dict, included: list, excluded: list, weights_cfg, jobs=1):
    """
    Learn the generic, attack-specific and category weights from normalized signals.

    Input:
        clean_signals (np.ndarray): Normalized clean validation signals.
        adv_signals (dict): Attack kind to normalized adversarial signals.
        included (list): Attack kinds that weights are learned from.
        excluded (list): Attack kinds kept out of learning; their own weights are still stored.
        weights_cfg (WeightsConfig): Grid and refinement steps.
        jobs (int): Parallel workers for the per-attack searches.

    Returns:
        WeightBank: The learned weights with their training AUCs.
    """
    grid_step, refine_step = weights_cfg.grid_step, weights_cfg.refine_step
    kinds = included + excluded
    learned = joblib.Parallel(n_jobs=jobs)(
        joblib.delayed(learn_weights if kind in included else _learn_optional)(
            clean_signals, adv_signals[kind], grid_step, refine_step
        )
        for kind in kinds
    )
    per_attack, excluded_weights, aucs = {}, {}, {}
    for kind, result in zip(kinds, learned):
        if result is None:
            continue
        weights, value = result
        (per_attack if kind in included else excluded_weights)[kind] = weights
        aucs[kind] = value
    pooled_adv = np.vstack([adv_signals[kind] for kind in included])
    generic, aucs["generic"] = learn_weights(clean_signals, pooled_adv, grid_step, refine_step)
    categories = category_average(per_attack)
    pooled_categories = {}
    for category in CATEGORIES:
        category_adv = np.vstack(
            [adv_signals[kind] for kind in included if ATTACK_CATEGORIES[kind] == category]
        )
        pooled_categories[category], aucs[f"pooled_{category}"] = learn_weights(
            clean_signals, category_adv, grid_step, refine_step
        )
        aucs[category] = auc(ads(clean_signals, categories[category]), ads(category_adv, categories[category]))
    per_signal = {kind: signal_aucs(clean_signals, adv_signals[kind]) for kind in kinds}
    per_signal["pooled"] = signal_aucs(clean_signals, pooled_adv)
    for kind, weights in per_attack.items():
        logger.info("Weights for %s: %s (AUC %.4f)", kind, weights.to_dict(), aucs[kind])
    logger.info("Generic weights: %s (AUC %.4f)", generic.to_dict(), aucs["generic"])
    return WeightBank(
        generic=generic,
        per_attack=per_attack,
        categories=categories,
        excluded=excluded_weights,
        pooled_categories=pooled_categories,
        aucs=aucs,
        signal_aucs=per_signal,
    )


def learn_model_weights(models: list, suite: dict, included: list) -> ModelWeightBank:
    """
    Per-category model weights from each member's accuracy on the category's adversarial rows.
    """
    categories, accuracies = {}, {}
    for category in CATEGORIES:
        kinds = [kind for kind in included if ATTACK_CATEGORIES[kind] == category]
        features = np.vstack([suite[kind].adv_features for kind in kinds])
        labels = np.concatenate([suite[kind].labels for kind in kinds])
        accuracies[category] = np.array([np.mean(m.predict(features) == labels) for m in models])
        categories[category] = model_category_weights(accuracies[category])
        logger.info("Model weights for %s: %s", category, np.round(categories[category], 4).tolist())
    return ModelWeightBank(categories, accuracies)


def train(config, train_data, val_data, scaler: Scaler = None) -> SystemManifest:
    """
    Train the full defended system.

    Stage 1 fits the six members and checks each against the accuracy gate on the validation
    split. Stage 2 attacks the validation split with every configured attack and checks each
    against the ASR gate. Stage 3 fits the signal normalizer and learns the signal weights and
    the per-category model weights. Stage 4 sets tau_anomaly (fixed or tuned) and calibrates
    tau_detect to the target false positive rate on clean validation rows.

    Gate misses are warned about and recorded in the metadata; only a member that cannot be
    fitted stops training.

    Input:
        config (RunConfig): The run configuration.
        train_data (LabeledDataset): Standardized training split.
        val_data (LabeledDataset): Standardized validation split.
        scaler (Scaler): The scaler the splits were standardized with.

    Returns:
        SystemManifest: The trained system.

    Raises:
        GateError: If a member cannot be fitted.
        DataError: If a split is too small for weight learning or calibration.
    """
    if not train_data.standardized or not val_data.standardized:
        raise DataError("Training needs standardized splits.")
    models_seed = config.seed_for("models")
    specs = ensemble_specs(models_seed, config.models.laplace)
    models = fit_ensemble(specs, train_data, config.jobs)
    model_gate = {}
    for model in models:
        accuracy = float(np.mean(model.predict(val_data.features) == val_data.labels))
        passed = accuracy > config.models.accuracy_gate
        model_gate[model.paradigm] = {"accuracy": accuracy, "passed": passed}
        logger.info("Model %s: validation accuracy %.4f", model.paradigm, accuracy)
        if not passed:
            warnings.warn(
                f"The {model.paradigm} member is below the accuracy gate ({accuracy:.4f})."
            )
    benign = benign_stats(train_data, config.dataset.benign_label, config.dataset.ridge_lambda)

    kinds = list(config.attacks.kinds)
    attack_seeds = {kind: config.seed_for("attacks", VALID_ATTACKS.index(kind)) for kind in kinds}
    suite = generate_suite(
        val_data,
        models,
        select_surrogate(models),
        StandardEnsemble(models),
        config.attacks,
        kinds,
        attack_seeds,
        {kind: config.attacks.source for kind in kinds},
        config.attacks.samples_per_attack,
        config.attacks.cw_samples,
        config.dataset.benign_label,
        config.attacks.asr_gate,
    )
    for kind, batch in suite.items():
        if batch.below_gate:
            warnings.warn(f"The {kind} attack is below the ASR gate.")

    scorer = SignalScorer(benign)
    clean_batch = ensemble_forward_batch(models, val_data.features)
    clean_raw = scorer.raw(clean_batch, val_data.features)
    adv_raw = {
        kind: scorer.raw(ensemble_forward_batch(models, batch.adv_features), batch.adv_features)
        for kind, batch in suite.items()
    }
    normalizer = SignalNormalizer.fit(np.vstack([clean_raw, *adv_raw.values()]))
    clean_signals = normalizer.apply(clean_raw)
    adv_signals = {kind: normalizer.apply(raw) for kind, raw in adv_raw.items()}
    included, excluded = _weight_plan(suite, config.weights)
    bank = learn_weight_bank(clean_signals, adv_signals, included, excluded, config.weights, config.jobs)
    model_weights = learn_model_weights(models, suite, included)

    tau_anomaly = config.thresholds.tau_anomaly
    if config.thresholds.tune_tau_anomaly:
        anomaly_norm = np.concatenate([adv_signals[k][:, ANOMALY_INDEX] for k in kinds])
        is_distribution = np.concatenate(
            [np.full(len(suite[k]), ATTACK_CATEGORIES[k] == "distribution") for k in kinds]
        )
        tau_anomaly = tune_tau_anomaly(anomaly_norm, is_distribution)
    thresholds = Thresholds(
        tau_conf=config.thresholds.tau_conf,
        tau_disagree=config.thresholds.tau_disagree,
        tau_anomaly=tau_anomaly,
        conf_scale=config.thresholds.conf_scale,
        conf_cutoff=config.thresholds.conf_cutoff,
    )
    _, _, clean_refined = refined_scores(clean_signals, bank, tau_anomaly)
    thresholds = thresholds.with_tau_detect(
        calibrate_tau_detect(clean_refined, config.thresholds.target_fpr)
    )

    metadata = {
        "seeds": {
            "master": config.seed,
            "split": config.seed_for("split"),
            "synth": config.seed_for("synth"),
            "models": [spec.seed for spec in specs],
            "attacks": attack_seeds,
        },
        "dataset_fingerprint": dataset_fingerprint(train_data),
        "class_count": train_data.class_count,
        "class_names": list(train_data.class_names),
        "benign_label": config.dataset.benign_label,
        "model_gate": model_gate,
        "asr": {kind: batch.asr for kind, batch in suite.items()},
        "below_gate": {kind: batch.below_gate for kind, batch in suite.items()},
        "learned_from": included,
        "excluded_from_learning": excluded,
        "tau_anomaly_tuned": config.thresholds.tune_tau_anomaly,
    }
    return SystemManifest(
        models=models,
        scaler=scaler,
        benign=benign,
        normalizer=normalizer,
        weight_bank=bank,
        model_weights=model_weights,
        thresholds=thresholds,
        metadata=metadata,
    )


@dataclass
class RunLayout:
    """
    Paths of a run directory.
    """

    root: str

    @property
    def manifest(self) -> str:
        return os.path.join(self.root, "manifest")

    @property
    def data(self) -> str:
        return os.path.join(self.root, "data")

    @property
    def attacks(self) -> str:
        return os.path.join(self.root, "attacks")

    @property
    def reports(self) -> str:
        return os.path.join(self.root, "reports")

    def split(self, name: str) -> str:
        return os.path.join(self.data, f"{name}.csv")


def prepare_data(config):
    """
    Load the configured dataset, split it and standardize the splits.

    Returns:
        tuple: (scaler, train, val, test).
    """
    data = load_dataset(config.dataset, config.seed_for("synth"))
    spec = SplitSpec.from_config(config.dataset.split, config.seed_for("split"))
    return prepare_splits(data, spec)


def build_system(config) -> SystemManifest:
    """
    Prepare the data, train the system and write the manifest and splits to the run directory.
    """
    layout = RunLayout(config.output_dir)
    scaler, train_data, val_data, test_data = prepare_data(config)
    logger.info(
        "Splits: %d train, %d validation, %d test rows with %d features",
        train_data.n_samples,
        val_data.n_samples,
        test_data.n_samples,
        train_data.n_features,
    )
    manifest = train(config, train_data, val_data, scaler=scaler)
    manifest.save(layout.manifest)
    for name, split in (("train", train_data), ("val", val_data), ("test", test_data)):
        save_split(split, layout.split(name))
    write_json(config.to_dict(), os.path.join(config.output_dir, "config.json"))
    return manifest


def load_run_split(layout: RunLayout, name: str, manifest: SystemManifest):
    return load_split(
        layout.split(name),
        manifest.scaler,
        manifest.metadata["class_count"],
        manifest.metadata.get("class_names"),
    )
