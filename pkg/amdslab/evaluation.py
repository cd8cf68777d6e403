"""
Evaluation of a trained system on the test split: metrics with bootstrap intervals, the
learned-weight and detection tables, the cascade comparison, the baselines, the ablations, the
adaptive adversaries and the dimensionality study.

Every ``run_*`` function returns a table dictionary with ``columns`` and ``rows`` (records) plus
table-specific summaries; ``output.write_table`` renders and saves it.
"""

import logging
import os
from dataclasses import dataclass, replace

import numpy as np
from sklearn.metrics import f1_score, precision_recall_fscore_support, roc_curve

from .attacks import (
    AttackBatch,
    adaptive_attack,
    fgsm,
    generate_suite,
    pgd,
    select_attack_indices,
)
from .config import (
    ATTACK_CATEGORIES,
    CATEGORIES,
    DIFFERENTIABLE_PARADIGMS,
    VALID_ATTACKS,
    VALID_PARADIGMS,
)
from .detector import refined_scores
from .exceptions import DataError, ManifestError, UndefinedMetricError
from .model import StandardEnsemble, ensemble_specs, fit, fit_ensemble, select_surrogate
from .output import write_json, write_table
from .pipeline import ABLATION_TOGGLES, DefendedSystem, InferenceOptions, infer_batch, train
from .reader import SplitSpec, prepare_splits, synth_generate
from .weights import ads, auc

logger = logging.getLogger(__name__)


def _aligned(preds, labels):
    preds = np.asarray(preds).ravel()
    labels = np.asarray(labels).ravel()
    if preds.size == 0:
        raise UndefinedMetricError("Metrics need at least one prediction.")
    if preds.shape != labels.shape:
        raise DataError("Predictions and labels must have the same length.")
    return preds, labels


def accuracy(preds, labels) -> float:
    """
    Raises:
        UndefinedMetricError: If the input is empty.
    """
    preds, labels = _aligned(preds, labels)
    return float(np.mean(preds == labels))


def per_class_f1(preds, labels) -> dict:
    """F1 of every class that occurs in the labels or the predictions, with 0/0 taken as 0."""
    preds, labels = _aligned(preds, labels)
    present = np.union1d(preds, labels)
    scores = f1_score(labels, preds, labels=present, average=None, zero_division=0)
    return {int(c): float(s) for c, s in zip(present, scores)}


def f1_macro(preds, labels) -> float:
    """Unweighted mean of the per-class F1; classes absent from both inputs are skipped."""
    return float(np.mean(list(per_class_f1(preds, labels).values())))


def bootstrap_ci(metric, *arrays, iters: int = 1000, level: float = 0.95, seed: int = 0):
    """
    Percentile bootstrap interval of a metric over resamples of aligned arrays.

    The interval is widened to contain the point estimate when the percentiles miss it.

    Input:
        metric (callable): Metric of the arrays, e.g. ``accuracy(preds, labels)``.
        arrays (np.ndarray): Aligned samples, resampled together with replacement.
        iters (int): Number of resamples.
        level (float): Confidence level.
        seed (int): Seed of the resampling.

    Returns:
        tuple: (lower, point, upper).

    Raises:
        UndefinedMetricError: If the sample is empty.
    """
    arrays = [np.asarray(a) for a in arrays]
    n = arrays[0].shape[0]
    if n == 0:
        raise UndefinedMetricError("The bootstrap needs a non-empty sample.")
    point = float(metric(*arrays))
    rng = np.random.default_rng(seed)
    stats = np.empty(iters)
    for b in range(iters):
        rows = rng.integers(0, n, size=n)
        stats[b] = metric(*(a[rows] for a in arrays))
    low, high = np.percentile(stats, [50.0 * (1 - level), 50.0 * (1 + level)])
    return float(min(low, point)), point, float(max(high, point))


def paired_bootstrap_test(
    metric, preds_a, preds_b, labels, iters: int = 1000, level: float = 0.95, seed: int = 0
) -> dict:
    """
    Paired bootstrap of ``metric(a) - metric(b)`` over index-aligned predictions.

    Returns:
        dict: Observed difference, its percentile interval and the one-sided p-value (fraction
        of resamples where the difference is not positive).
    """
    preds_a, labels = _aligned(preds_a, labels)
    preds_b, _ = _aligned(preds_b, labels)
    observed = metric(preds_a, labels) - metric(preds_b, labels)
    rng = np.random.default_rng(seed)
    diffs = np.empty(iters)
    for b in range(iters):
        rows = rng.integers(0, labels.size, size=labels.size)
        diffs[b] = metric(preds_a[rows], labels[rows]) - metric(preds_b[rows], labels[rows])
    low, high = np.percentile(diffs, [50.0 * (1 - level), 50.0 * (1 + level)])
    return {
        "difference": float(observed),
        "ci": [float(min(low, observed)), float(max(high, observed))],
        "p_value": float(np.mean(diffs <= 0)),
    }


def metric_entry(preds, labels, iters: int, level: float, seed: int) -> dict:
    """Accuracy and macro-F1 with bootstrap intervals, plus the per-class F1."""
    acc_low, acc, acc_high = bootstrap_ci(accuracy, preds, labels, iters=iters, level=level, seed=seed)
    f1_low, f1, f1_high = bootstrap_ci(f1_macro, preds, labels, iters=iters, level=level, seed=seed)
    return {
        "n": int(np.asarray(labels).size),
        "accuracy": acc,
        "accuracy_ci": [acc_low, acc_high],
        "f1_macro": f1,
        "f1_macro_ci": [f1_low, f1_high],
        "per_class_f1": per_class_f1(preds, labels),
    }


def _pp(a: float, b: float) -> float:
    return (a - b) * 100.0


def _table(name: str, title: str, columns: list, rows: list, **extra) -> dict:
    return {"table": name, "title": title, "columns": columns, "rows": rows, **extra}


def attack_source_for(kind: str, evaluation_cfg) -> str:
    """Gradient attacks use the configured evaluation source; distribution attacks use all rows."""
    return evaluation_cfg.attack_source if ATTACK_CATEGORIES[kind] == "gradient" else "all"


def evaluation_attack_seeds(config, kinds: list) -> dict:
    # Offset past the validation attack seeds.
    return {kind: config.seed_for("attacks", len(VALID_ATTACKS) + VALID_ATTACKS.index(kind)) for kind in kinds}


def build_test_suite(config, manifest, test_data) -> dict:
    """
    Generate the evaluation attack batches from the test split.
    """
    kinds = list(config.attacks.kinds)
    return generate_suite(
        test_data,
        manifest.models,
        select_surrogate(manifest.models),
        StandardEnsemble(manifest.models),
        config.attacks,
        kinds,
        evaluation_attack_seeds(config, kinds),
        {kind: attack_source_for(kind, config.evaluation) for kind in kinds},
        config.evaluation.adversarial_per_attack,
        config.attacks.cw_samples,
        config.dataset.benign_label,
        config.attacks.asr_gate,
    )


def save_test_suite(suite: dict, directory: str, schema: list):
    for batch in suite.values():
        batch.save(directory, schema)


def load_test_suite(directory: str, kinds: list, schema: list) -> dict:
    """
    Raises:
        ManifestError: If any batch is missing; the message names all of them.
    """
    missing = [
        kind
        for kind in kinds
        if not os.path.isfile(os.path.join(directory, f"{kind}.csv"))
        or not os.path.isfile(os.path.join(directory, f"{kind}.json"))
    ]
    if missing:
        raise ManifestError(f"Missing attack batches: {', '.join(missing)}; run attack first.")
    return {kind: AttackBatch.load(directory, kind, schema) for kind in kinds}


@dataclass
class EvaluationContext:
    """
    Everything the table builders share: the configuration, the trained system, the clean
    evaluation rows and the adversarial suite.
    """

    config: object
    manifest: object
    test: object
    clean_features: np.ndarray
    clean_labels: np.ndarray
    suite: dict

    @classmethod
    def build(cls, config, manifest, test_data, suite: dict) -> "EvaluationContext":
        rng = np.random.default_rng(config.seed_for("suite"))
        count = min(config.evaluation.clean_samples, test_data.n_samples)
        rows = np.sort(rng.choice(test_data.n_samples, size=count, replace=False))
        return cls(config, manifest, test_data, test_data.features[rows], test_data.labels[rows], suite)

    @property
    def iters(self) -> int:
        return self.config.evaluation.bootstrap_iters

    @property
    def level(self) -> float:
        return self.config.evaluation.confidence_level

    @property
    def seed(self) -> int:
        return self.config.seed_for("bootstrap")

    def entry(self, preds, labels) -> dict:
        return metric_entry(preds, labels, self.iters, self.level, self.seed)

    def sets(self) -> dict:
        """Evaluation set name to (features, labels): 'clean' first, then every attack."""
        sets = {"clean": (self.clean_features, self.clean_labels)}
        for kind, batch in self.suite.items():
            sets[kind] = (batch.adv_features, batch.labels)
        return sets

    def kinds_in(self, category: str) -> list:
        return [kind for kind in self.suite if ATTACK_CATEGORIES[kind] == category]


def run_weights_table(manifest) -> dict:
    """
    Learned signal weights per attack, per category and generic, with their training AUCs and
    the AUC of every single signal.
    """
    bank = manifest.weight_bank
    rows = []

    def add(name, weights, learned):
        signal = bank.signal_aucs.get(name, {})
        rows.append(
            {
                "weights": name,
                "alpha": weights.alpha,
                "beta": weights.beta,
                "gamma": weights.gamma,
                "dominant": weights.dominant(),
                "auc": bank.aucs.get(name),
                "learned": learned,
                "auc_entropy": signal.get("entropy"),
                "auc_disagreement": signal.get("disagreement"),
                "auc_anomaly": signal.get("anomaly"),
            }
        )

    for kind, weights in bank.per_attack.items():
        add(kind, weights, True)
    for kind, weights in bank.excluded.items():
        add(kind, weights, False)
    for category in CATEGORIES:
        add(category, bank.categories[category], True)
    for category, weights in bank.pooled_categories.items():
        add(f"pooled_{category}", weights, True)
    add("generic", bank.generic, True)
    rows[-1].update({f"auc_{k}": v for k, v in bank.signal_aucs.get("pooled", {}).items()})
    dominant = {row["weights"]: row["dominant"] for row in rows}
    checks = {
        "gradient_disagreement_dominant": {
            kind: dominant[kind] == "disagreement"
            for kind in ("fgsm", "pgd_linf")
            if kind in dominant
        },
        "morphing_anomaly_dominant": dominant.get("morphing") == "anomaly",
    }
    return _table(
        "weights",
        "Learned signal weights",
        ["weights", "alpha", "beta", "gamma", "dominant", "auc", "learned", "auc_entropy", "auc_disagreement", "auc_anomaly"],
        rows,
        model_weights=manifest.model_weights.to_dict(),
        checks=checks,
    )


def run_two_stage_table(ctx: EvaluationContext) -> dict:
    """
    Detection AUC per attack with the generic weights, the attack's own weights and two-stage
    detection, plus the detection rate at tau_detect and the category-inference quality.
    """
    manifest = ctx.manifest
    bank, thresholds = manifest.weight_bank, manifest.thresholds
    system = DefendedSystem(manifest)
    clean_signals = system.signals(ctx.clean_features)
    _, clean_generic, clean_refined = refined_scores(clean_signals, bank, thresholds.tau_anomaly)
    rows, roc = [], {}
    inferred, actual = [], []
    for kind, batch in ctx.suite.items():
        signals = system.signals(batch.adv_features)
        categories, generic, refined = refined_scores(signals, bank, thresholds.tau_anomaly)
        specific = None
        if kind in bank.per_attack or kind in bank.excluded:
            weights = bank.for_attack(kind)
            specific = auc(ads(clean_signals, weights), ads(signals, weights))
        rows.append(
            {
                "attack": kind,
                "category": ATTACK_CATEGORIES[kind],
                "asr": batch.asr,
                "below_gate": batch.below_gate,
                "auc_generic": auc(clean_generic, generic),
                "auc_attack_specific": specific,
                "auc_two_stage": auc(clean_refined, refined),
                "detection_rate": float(np.mean(refined > thresholds.tau_detect)),
                "category_accuracy": float(np.mean(categories == ATTACK_CATEGORIES[kind])),
            }
        )
        inferred.append(categories == "distribution")
        actual.append(np.full(len(batch), ATTACK_CATEGORIES[kind] == "distribution"))
        if ctx.config.evaluation.roc_points:
            fpr, tpr, _ = roc_curve(
                np.r_[np.zeros(clean_refined.size), np.ones(refined.size)],
                np.r_[clean_refined, refined],
            )
            roc[kind] = {"fpr": fpr.tolist(), "tpr": tpr.tolist()}
    means = {
        column: float(np.mean([row[column] for row in rows if row[column] is not None]))
        for column in ("auc_generic", "auc_attack_specific", "auc_two_stage")
    }
    precision, recall, f1, _ = precision_recall_fscore_support(
        np.concatenate(actual), np.concatenate(inferred), average="binary", zero_division=0
    )
    extra = {
        "means": means,
        "ordering": {
            "two_stage_above_attack_specific": means["auc_two_stage"] > means["auc_attack_specific"],
            "attack_specific_above_generic": means["auc_attack_specific"] > means["auc_generic"],
        },
        "category_inference": {
            "precision": float(precision),
            "recall": float(recall),
            "f1": float(f1),
        },
        "clean_fpr": float(np.mean(clean_refined > thresholds.tau_detect)),
        "tau_detect": thresholds.tau_detect,
        "tau_anomaly": thresholds.tau_anomaly,
    }
    if roc:
        extra["roc"] = roc
    return _table(
        "two_stage",
        "Two-stage detection",
        ["attack", "category", "asr", "auc_generic", "auc_attack_specific", "auc_two_stage", "detection_rate", "category_accuracy"],
        rows,
        **extra,
    )


def run_cascade_table(ctx: EvaluationContext):
    """
    Cascaded against non-cascaded inference on the clean rows and every attack.

    Returns:
        tuple: (table, timing). Timing values are machine-dependent and kept out of the table.
    """
    sets = ctx.sets()
    features = np.vstack([x for x, _ in sets.values()])
    labels = np.concatenate([y for _, y in sets.values()])
    n_clean = ctx.clean_labels.size
    rows, timing, predictions = [], {}, {}
    for name, options in (("cascade", InferenceOptions()), ("full", InferenceOptions(cascade=False))):
        result = infer_batch(features, ctx.manifest, options)
        predictions[name] = result.y_class
        stats = result.instrumentation
        rows.append(
            {
                "pipeline": name,
                "accuracy": accuracy(result.y_class, labels),
                "clean_accuracy": accuracy(result.y_class[:n_clean], labels[:n_clean]),
                "stage1": stats["stage_counts"]["1"],
                "stage2": stats["stage_counts"]["2"],
                "stage3": stats["stage_counts"]["3"],
                "mahalanobis_count": stats["mahalanobis_count"],
                "adaptive_weighting_count": stats["adaptive_weighting_count"],
            }
        )
        timing[name] = {
            "latency_ms_per_sample": stats["latency_ms_per_sample"],
            "throughput": stats["throughput"],
        }
    cascade, full = rows
    table = _table(
        "cascade",
        "Cascade efficiency",
        ["pipeline", "accuracy", "clean_accuracy", "stage1", "stage2", "stage3", "mahalanobis_count", "adaptive_weighting_count"],
        rows,
        n_samples=int(labels.size),
        accuracy_difference_pp=_pp(cascade["accuracy"], full["accuracy"]),
        mahalanobis_saved=full["mahalanobis_count"] - cascade["mahalanobis_count"],
        stage_fractions={
            str(stage): cascade[f"stage{stage}"] / labels.size for stage in (1, 2, 3)
        },
    )
    return table, timing


def _mixture(train_data, rows, adv_features):
    features = train_data.features.copy()
    features[rows] = adv_features
    return replace(train_data, features=features)


def train_at_ensemble(train_data, surrogate, config, seed: int) -> list:
    """
    Adversarially trained ensemble: half of the training rows are replaced by PGD examples.

    Differentiable members are first fitted on clean data and then refitted on a mixture with
    PGD examples against themselves. Tree members are refitted on a mixture with PGD examples
    against the surrogate.
    """
    rng = np.random.default_rng(seed)
    rows = rng.permutation(train_data.n_samples)[: train_data.n_samples // 2]
    epsilon = config.attacks.epsilon
    steps = config.evaluation.at_steps
    step_size = epsilon / 4.0

    def attack(model):
        return pgd(
            model, train_data.features[rows], train_data.labels[rows], epsilon, steps, step_size
        )

    specs = ensemble_specs(seed, config.models.laplace)
    tree_specs = [s for s in specs if s.paradigm not in DIFFERENTIABLE_PARADIGMS]
    members = dict(
        zip(
            [s.paradigm for s in tree_specs],
            fit_ensemble(tree_specs, _mixture(train_data, rows, attack(surrogate)), config.jobs),
        )
    )
    for spec in specs:
        if spec.paradigm in DIFFERENTIABLE_PARADIGMS:
            clean_model = fit(spec, train_data)
            members[spec.paradigm] = fit(spec, _mixture(train_data, rows, attack(clean_model)))
    return [members[p] for p in VALID_PARADIGMS]


def _single_best(manifest, choice: str):
    if choice == "auto":
        gate = manifest.metadata["model_gate"]
        choice = max(VALID_PARADIGMS, key=lambda p: gate[p]["accuracy"])
    return next(m for m in manifest.models if m.paradigm == choice)


def _system_row(ctx, name: str, preds: dict, sets: dict, repeat: int = 1) -> tuple:
    """Metrics of one system on clean, pooled adversarial and per-category rows."""

    def labels_of(keys):
        return np.concatenate([np.tile(sets[k][1], repeat) for k in keys])

    def preds_of(keys):
        return np.concatenate([preds[k] for k in keys])

    kinds = list(ctx.suite)
    groups = {"clean": ["clean"], "adversarial": kinds}
    for category in CATEGORIES:
        groups[category] = ctx.kinds_in(category)
    entries = {group: ctx.entry(preds_of(keys), labels_of(keys)) for group, keys in groups.items()}
    per_attack = {kind: accuracy(preds[kind], np.tile(sets[kind][1], repeat)) for kind in kinds}
    row = {"system": name}
    for group, entry in entries.items():
        row[f"{group}_accuracy"] = entry["accuracy"]
        row[f"{group}_accuracy_ci"] = entry["accuracy_ci"]
        row[f"{group}_f1"] = entry["f1_macro"]
    return row, entries, per_attack


def run_baselines(ctx: EvaluationContext, train_data) -> dict:
    """
    Standard ensemble, adversarially trained ensemble, single best model and generic-weights
    detection against the full system, on identical data.
    """
    manifest, config = ctx.manifest, ctx.config
    sets = ctx.sets()
    standard = StandardEnsemble(manifest.models)
    single = _single_best(manifest, config.evaluation.single_best)
    surrogate = select_surrogate(manifest.models)
    predictions = {
        "standard": {k: standard.predict(x) for k, (x, _) in sets.items()},
        "single_best": {k: single.predict(x) for k, (x, _) in sets.items()},
        "uniform_ads": {
            k: infer_batch(x, manifest, InferenceOptions(generic_only=True)).y_class
            for k, (x, _) in sets.items()
        },
        "amds": {k: infer_batch(x, manifest).y_class for k, (x, _) in sets.items()},
    }
    at_runs = []
    for repeat in range(config.evaluation.at_seeds):
        at_models = train_at_ensemble(
            train_data, surrogate, config, config.seed_for("adversarial_training", repeat)
        )
        at_ensemble = StandardEnsemble(at_models)
        at_runs.append({k: at_ensemble.predict(x) for k, (x, _) in sets.items()})
        logger.info("Adversarial training run %d finished", repeat + 1)
    predictions["adversarial_training"] = {
        k: np.concatenate([run[k] for run in at_runs]) for k in sets
    }
    repeats = {"adversarial_training": len(at_runs)}
    order = ["standard", "adversarial_training", "single_best", "uniform_ads", "amds"]
    rows, entries, per_attack = [], {}, {}
    for name in order:
        row, entries[name], per_attack[name] = _system_row(
            ctx, name, predictions[name], sets, repeats.get(name, 1)
        )
        rows.append(row)
    at_seed_accuracy = [
        accuracy(np.concatenate([run[k] for k in ctx.suite]), np.concatenate([sets[k][1] for k in ctx.suite]))
        for run in at_runs
    ]
    amds = entries["amds"]
    deltas = {
        name: {
            f"{group}_accuracy_pp": _pp(amds[group]["accuracy"], entries[name][group]["accuracy"])
            for group in ("clean", "adversarial", *CATEGORIES)
        }
        for name in order[:-1]
    }
    adv_labels = np.concatenate([sets[k][1] for k in ctx.suite])
    amds_adv = np.concatenate([predictions["amds"][k] for k in ctx.suite])
    significance = {
        "amds_vs_standard": paired_bootstrap_test(
            accuracy,
            amds_adv,
            np.concatenate([predictions["standard"][k] for k in ctx.suite]),
            adv_labels,
            ctx.iters,
            ctx.level,
            ctx.seed,
        ),
        "amds_vs_adversarial_training": paired_bootstrap_test(
            accuracy,
            np.tile(amds_adv, len(at_runs)),
            np.concatenate(
                [np.concatenate([run[k] for k in ctx.suite]) for run in at_runs]
            ),
            np.tile(adv_labels, len(at_runs)),
            ctx.iters,
            ctx.level,
            ctx.seed,
        ),
    }
    return _table(
        "baselines",
        "Baseline comparison",
        ["system", "clean_accuracy", "clean_f1", "adversarial_accuracy", "adversarial_f1", "gradient_accuracy", "distribution_accuracy"],
        rows,
        per_attack_accuracy=per_attack,
        per_class_f1={name: entries[name]["clean"]["per_class_f1"] for name in order},
        deltas_pp=deltas,
        significance=significance,
        single_best=single.paradigm,
        adversarial_training_seed_accuracy=at_seed_accuracy,
        checks={
            "standard_clean_at_least_amds": entries["standard"]["clean"]["accuracy"]
            >= amds["clean"]["accuracy"],
            "amds_gains_on_distribution": deltas["standard"]["distribution_accuracy_pp"] > 0,
        },
    )


def run_ablations(ctx: EvaluationContext) -> dict:
    """
    Full system against each ablated configuration on the same manifest.
    """
    sets = ctx.sets()
    kinds = list(ctx.suite)
    adv_labels = np.concatenate([sets[k][1] for k in kinds])
    standard = StandardEnsemble(ctx.manifest.models)
    rows, results = [], {}
    for toggle in ["full", *ABLATION_TOGGLES]:
        options = InferenceOptions.from_toggle(toggle)
        preds = {k: infer_batch(x, ctx.manifest, options).y_class for k, (x, _) in sets.items()}
        clean = ctx.entry(preds["clean"], ctx.clean_labels)
        adversarial = ctx.entry(np.concatenate([preds[k] for k in kinds]), adv_labels)
        results[toggle] = {"preds": preds, "clean": clean, "adversarial": adversarial}
        rows.append(
            {
                "configuration": toggle,
                "clean_accuracy": clean["accuracy"],
                "clean_accuracy_ci": clean["accuracy_ci"],
                "clean_f1": clean["f1_macro"],
                "adversarial_accuracy": adversarial["accuracy"],
                "adversarial_f1": adversarial["f1_macro"],
                "adversarial_f1_ci": adversarial["f1_macro_ci"],
            }
        )
    full = results["full"]
    contributions = {
        toggle: {
            "adversarial_f1_pp": _pp(full["adversarial"]["f1_macro"], results[toggle]["adversarial"]["f1_macro"]),
            "adversarial_accuracy_pp": _pp(
                full["adversarial"]["accuracy"], results[toggle]["adversarial"]["accuracy"]
            ),
            "clean_accuracy_pp": _pp(results[toggle]["clean"]["accuracy"], full["clean"]["accuracy"]),
        }
        for toggle in ABLATION_TOGGLES
    }
    uniform_preds = results["uniform_model_voting"]["preds"]
    return _table(
        "ablation",
        "Ablation study",
        ["configuration", "clean_accuracy", "clean_f1", "adversarial_accuracy", "adversarial_f1"],
        rows,
        contributions_pp=contributions,
        checks={
            "full_f1_at_least_ablated": {
                t: full["adversarial"]["f1_macro"] >= results[t]["adversarial"]["f1_macro"]
                for t in ABLATION_TOGGLES
            },
            "ablated_clean_at_least_full": {
                t: results[t]["clean"]["accuracy"] >= full["clean"]["accuracy"]
                for t in ABLATION_TOGGLES
            },
            "uniform_voting_matches_standard": all(
                np.array_equal(uniform_preds[k], standard.predict(x)) for k, (x, _) in sets.items()
            ),
        },
    )


def _rate(mask, rows):
    return float(np.mean(mask[rows])) if rows.any() else None


def run_adaptive_eval(ctx: EvaluationContext, epsilon: float = None) -> dict:
    """
    Plain FGSM and PGD against both adaptive adversaries at the same budget.

    The ASR is measured on rows the defended system classifies correctly before the attack;
    the evasion rate additionally requires the attack to go undetected. The standard ASR is
    measured against the undefended ensemble.
    """
    config, manifest = ctx.config, ctx.manifest
    epsilon = config.attacks.epsilon if epsilon is None else epsilon
    rng = np.random.default_rng(config.seed_for("adaptive"))
    rows = select_attack_indices(
        ctx.test,
        config.evaluation.attack_source,
        config.evaluation.adaptive_samples,
        config.dataset.benign_label,
        rng,
    )
    origin, labels = ctx.test.features[rows], ctx.test.labels[rows]
    system = DefendedSystem(manifest)
    surrogate = select_surrogate(manifest.models)
    standard = StandardEnsemble(manifest.models)
    correct = infer_batch(origin, manifest).y_class == labels
    standard_correct = standard.predict(origin) == labels
    attacks = {
        "fgsm": (fgsm(surrogate, origin, labels, epsilon), None),
        "pgd_linf": (
            pgd(surrogate, origin, labels, epsilon, config.attacks.pgd_steps, config.attacks.pgd_step_size),
            None,
        ),
    }
    for variant, iters in (
        ("baseline", config.evaluation.adaptive_baseline_iters),
        ("improved", config.evaluation.adaptive_improved_iters),
    ):
        result = adaptive_attack(
            system, origin, labels, variant, epsilon, iters, rng, surrogate, config.attacks.spsa_delta
        )
        attacks[f"adaptive_{variant}"] = (result.adv_features, result)
    table_rows = []
    for name, (adv, result) in attacks.items():
        run = infer_batch(adv, manifest)
        wrong = run.y_class != labels
        table_rows.append(
            {
                "attack": name,
                "amds_accuracy": accuracy(run.y_class, labels),
                "detection_rate": float(np.mean(run.y_detect)),
                "asr": _rate(wrong, correct),
                "evasion_rate": _rate(wrong & (run.y_detect == 0), correct),
                "standard_asr": _rate(standard.predict(adv) != labels, standard_correct),
                "ads_reduction": None if result is None else float(np.mean(result.ads_reduction)),
            }
        )
    by_name = {row["attack"]: row for row in table_rows}
    fgsm_asr = by_name["fgsm"]["standard_asr"]
    checks = {
        f"{name}_below_fgsm": by_name[name]["asr"] is not None
        and fgsm_asr is not None
        and by_name[name]["asr"] < fgsm_asr
        for name in ("adaptive_baseline", "adaptive_improved")
    }
    return _table(
        "adaptive",
        "Adaptive adversaries",
        ["attack", "amds_accuracy", "detection_rate", "asr", "evasion_rate", "standard_asr", "ads_reduction"],
        table_rows,
        epsilon=epsilon,
        n_samples=int(labels.size),
        checks=checks,
    )


def dimensionality_study(dims: list, epsilons: list, config) -> dict:
    """
    FGSM perturbation size and accuracy of the standard ensemble as the feature count grows.

    For every dimension a synthetic dataset with the configured separation is generated and an
    ensemble is trained; FGSM is run at every epsilon. The L2 norm of a full-support sign step
    is ``epsilon * sqrt(d)``. With ``scaling_train_systems`` a full defended system is also
    trained per dimension and its adversarial accuracy reported.
    """
    synth = config.dataset.synth
    per_class = config.evaluation.scaling_per_class
    rows = []
    for index, dims_value in enumerate(dims):
        seed = config.seed_for("scaling", index)
        raw = synth_generate(synth.classes, dims_value, per_class, synth.separation, seed)
        scaler, train_data, val_data, test_data = prepare_splits(
            raw, SplitSpec.from_config(config.dataset.split, seed)
        )
        models = fit_ensemble(ensemble_specs(config.seed_for("models"), config.models.laplace), train_data, config.jobs)
        standard = StandardEnsemble(models)
        surrogate = select_surrogate(models)
        manifest = train(config, train_data, val_data, scaler) if config.evaluation.scaling_train_systems else None
        clean_accuracy = accuracy(standard.predict(test_data.features), test_data.labels)
        for epsilon in epsilons:
            adv = fgsm(surrogate, test_data.features, test_data.labels, epsilon)
            offsets = adv - test_data.features
            adversarial_accuracy = accuracy(standard.predict(adv), test_data.labels)
            row = {
                "dims": int(dims_value),
                "epsilon": float(epsilon),
                "l2_norm": float(np.mean(np.linalg.norm(offsets, axis=1))),
                "expected_l2_norm": float(epsilon * np.sqrt(dims_value)),
                "full_support_fraction": float(np.mean(np.all(offsets != 0, axis=1))),
                "clean_accuracy": clean_accuracy,
                "adversarial_accuracy": adversarial_accuracy,
                "accuracy_drop": clean_accuracy - adversarial_accuracy,
            }
            if manifest is not None:
                amds_accuracy = accuracy(infer_batch(adv, manifest).y_class, test_data.labels)
                row["amds_adversarial_accuracy"] = amds_accuracy
                row["amds_delta_pp"] = _pp(amds_accuracy, adversarial_accuracy)
            rows.append(row)
        logger.info("Dimensionality %d: clean accuracy %.4f", dims_value, clean_accuracy)
    ratios = {}
    for epsilon in epsilons:
        series = [row for row in rows if row["epsilon"] == float(epsilon)]
        base = series[0]
        ratios[str(epsilon)] = {
            str(row["dims"]): {
                "l2_ratio": row["l2_norm"] / base["l2_norm"],
                "expected_ratio": float(np.sqrt(row["dims"] / base["dims"])),
            }
            for row in series
        }
    drops = {
        str(epsilon): all(
            a["adversarial_accuracy"] >= b["adversarial_accuracy"]
            for a, b in zip(
                [r for r in rows if r["epsilon"] == float(epsilon)],
                [r for r in rows if r["epsilon"] == float(epsilon)][1:],
            )
        )
        for epsilon in epsilons
    }
    columns = ["dims", "epsilon", "l2_norm", "expected_l2_norm", "clean_accuracy", "adversarial_accuracy", "accuracy_drop"]
    if config.evaluation.scaling_train_systems:
        columns += ["amds_adversarial_accuracy", "amds_delta_pp"]
    return _table(
        "scaling",
        "Attack strength against dimensionality",
        columns,
        rows,
        ratios=ratios,
        checks={"adversarial_accuracy_non_increasing": drops},
    )


def run_evaluation(config, manifest, test_data, suite: dict, train_data, reports_dir: str) -> dict:
    """
    Build every enabled table, write it as JSON and aligned text, and write the timing file.

    Returns:
        dict: Table name to table.
    """
    ctx = EvaluationContext.build(config, manifest, test_data, suite)
    tables = [run_weights_table(manifest), run_two_stage_table(ctx)]
    cascade, timing = run_cascade_table(ctx)
    tables.append(cascade)
    if config.evaluation.baselines:
        tables.append(run_baselines(ctx, train_data))
    if config.evaluation.ablations:
        tables.append(run_ablations(ctx))
    if config.evaluation.scaling:
        tables.append(
            dimensionality_study(config.evaluation.scaling_dims, config.evaluation.scaling_epsilons, config)
        )
    if config.evaluation.adaptive:
        tables.append(run_adaptive_eval(ctx))
    for table in tables:
        write_table(table, reports_dir)
        logger.info("Wrote %s", table["table"])
    write_json(timing, os.path.join(reports_dir, "timing.json"))
    return {table["table"]: table for table in tables}
