"""
A module for creating and training the six-paradigm classifier ensemble.

Every member is wrapped in a `TrainedModel`, which gives all paradigms the same prediction
interface. Tree members report Laplace-smoothed leaf frequencies; the logistic regression and
MLP members additionally expose their logits and input gradients, computed in closed form from
the fitted coefficients.
"""

import logging
import warnings
from dataclasses import asdict, dataclass

import joblib
import numpy as np
import scipy.special
from sklearn.ensemble import (
    GradientBoostingClassifier,
    HistGradientBoostingClassifier,
    RandomForestClassifier,
)
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import classification_report, log_loss
from sklearn.neural_network import MLPClassifier
from sklearn.tree import DecisionTreeClassifier

from .config import DIFFERENTIABLE_PARADIGMS, FORMAT_VERSION, LAPLACE, VALID_PARADIGMS
from .exceptions import DataError, GateError, NotDifferentiableError
from .output import atomic_target
from .signals import disagreement_batch

logger = logging.getLogger(__name__)

# Paradigms whose probabilities are read from leaf class frequencies.
LEAF_FREQUENCY_PARADIGMS = ["decision_tree", "random_forest"]


@dataclass(frozen=True)
class ClassifierSpec:
    """
    One ensemble member: its paradigm and seed.
    """

    paradigm: str
    seed: int = 0
    laplace: float = LAPLACE

    def __post_init__(self):
        if self.paradigm not in VALID_PARADIGMS:
            raise ValueError(f"Select a paradigm from the list: {', '.join(VALID_PARADIGMS)}.")

    def build(self):
        """
        Create the unfitted scikit-learn estimator of this paradigm.
        """
        match self.paradigm:
            case "decision_tree":
                return DecisionTreeClassifier(max_depth=10, random_state=self.seed)
            case "random_forest":
                return RandomForestClassifier(n_estimators=100, random_state=self.seed)
            case "boosted_trees_a":
                return GradientBoostingClassifier(
                    n_estimators=100, learning_rate=0.1, random_state=self.seed
                )
            case "boosted_trees_b":
                return HistGradientBoostingClassifier(
                    max_iter=100,
                    learning_rate=0.1,
                    max_leaf_nodes=31,
                    early_stopping=False,
                    random_state=self.seed,
                )
            case "logistic_regression":
                return LogisticRegression(C=1.0, penalty="l2", max_iter=1000, random_state=self.seed)
            case "mlp":
                return MLPClassifier(
                    hidden_layer_sizes=(100, 50),
                    activation="relu",
                    solver="adam",
                    batch_size=64,
                    max_iter=200,
                    learning_rate="constant",
                    random_state=self.seed,
                )
            case _:
                raise ValueError(f"Select a paradigm from the list: {', '.join(VALID_PARADIGMS)}.")


def ensemble_specs(seed: int, laplace: float = LAPLACE) -> list:
    """The six member specs, seeded ``seed + index`` in paradigm order."""
    return [ClassifierSpec(p, seed + i, laplace) for i, p in enumerate(VALID_PARADIGMS)]


def leaf_probabilities(counts: np.ndarray, laplace: float = LAPLACE) -> np.ndarray:
    """
    Smoothed class frequencies ``(count_c + laplace) / (n + laplace * C)`` along the last axis.
    An empty row without smoothing maps to the uniform distribution.
    """
    counts = np.asarray(counts, dtype=float)
    n_classes = counts.shape[-1]
    totals = counts.sum(axis=-1, keepdims=True) + laplace * n_classes
    smoothed = (counts + laplace) / np.where(totals > 0, totals, 1.0)
    return np.where(totals > 0, smoothed, 1.0 / n_classes)


def _leaf_table(tree, class_count: int, laplace: float) -> np.ndarray:
    value = tree.tree_.value[:, 0, :]
    totals = value.sum(axis=1, keepdims=True)
    counts = value / np.where(totals > 0, totals, 1.0) * tree.tree_.weighted_n_node_samples[:, None]
    full = np.zeros((value.shape[0], class_count))
    full[:, : counts.shape[1]] = counts
    return leaf_probabilities(full, laplace)


class TrainedModel:
    """
    A fitted ensemble member with a uniform prediction interface.

    Decision tree and random forest members predict from Laplace-smoothed leaf class
    frequencies. The boosted-tree members return the estimator's own probabilities, a softmax
    of additive scores that never reaches exactly 0 or 1; the differentiable members return the
    softmax of their logits.

    Input:
        spec (ClassifierSpec): The member's paradigm and seed.
        estimator: The fitted scikit-learn estimator.
        class_count (int): Number of classes C.
        n_features (int): Expected input width d.

    Methods:
        predict_proba: Probability vectors of shape (n, C).
        predict: Class ids.
        logits: Pre-softmax scores (differentiable members only).
        logit_vjp: Vector-Jacobian product of the logits with respect to the input.
        input_gradient: Gradient of the cross-entropy loss with respect to the input.
        loss: Per-sample cross-entropy.
        evaluate_model: Classification report on a labeled dataset.
        save_model: Write the member to a joblib file.
    """

    def __init__(self, spec: ClassifierSpec, estimator, class_count: int, n_features: int):
        self.spec = spec
        self.estimator = estimator
        self.class_count = class_count
        self.n_features = n_features
        self.report = None
        self._leaf_tables = None
        if self.leaf_frequency:
            self._leaf_tables = [_leaf_table(tree, class_count, spec.laplace) for tree in self._trees]

    @property
    def paradigm(self) -> str:
        return self.spec.paradigm

    @property
    def leaf_frequency(self) -> bool:
        return self.spec.paradigm in LEAF_FREQUENCY_PARADIGMS

    @property
    def _trees(self) -> list:
        return [self.estimator] if self.paradigm == "decision_tree" else list(self.estimator.estimators_)

    @property
    def differentiable(self) -> bool:
        return self.spec.paradigm in DIFFERENTIABLE_PARADIGMS

    def _as_matrix(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[None, :]
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise DataError(
                f"Expected {self.n_features} features, got {features.shape[-1]}."
            )
        return features

    def _require_gradients(self):
        if not self.differentiable:
            raise NotDifferentiableError(
                f"The {self.paradigm} member is non-differentiable; use a differentiable surrogate."
            )

    def _layer_weights(self):
        """Weight matrices and biases of the differentiable member, input to logits."""
        if self.paradigm == "logistic_regression":
            coef, intercept = self.estimator.coef_, self.estimator.intercept_
            if coef.shape[0] == 1:
                coef = np.vstack([np.zeros_like(coef), coef])
                intercept = np.concatenate([[0.0], intercept])
            return [coef.T], [intercept]
        coefs = list(self.estimator.coefs_)
        intercepts = list(self.estimator.intercepts_)
        if coefs[-1].shape[1] == 1:
            coefs[-1] = np.hstack([np.zeros_like(coefs[-1]), coefs[-1]])
            intercepts[-1] = np.concatenate([[0.0], intercepts[-1]])
        return coefs, intercepts

    def _forward(self, features: np.ndarray):
        coefs, intercepts = self._layer_weights()
        activations, pre_activations = [features], []
        for layer, (weight, bias) in enumerate(zip(coefs, intercepts)):
            z = activations[-1] @ weight + bias
            pre_activations.append(z)
            if layer < len(coefs) - 1:
                activations.append(np.maximum(z, 0.0))
        return pre_activations

    def logits(self, features) -> np.ndarray:
        """
        Logits of shape (n, C). Binary members report (0, z).

        Raises:
            NotDifferentiableError: If the member is tree-based.
        """
        self._require_gradients()
        return self._forward(self._as_matrix(features))[-1]

    def logit_vjp(self, features, cotangent) -> np.ndarray:
        """
        Gradient of ``sum_c cotangent_c * logit_c`` with respect to every input row.

        The rectified-linear derivative is taken as 0 at the kink.
        """
        self._require_gradients()
        features = self._as_matrix(features)
        cotangent = np.atleast_2d(np.asarray(cotangent, dtype=float))
        coefs, _ = self._layer_weights()
        pre_activations = self._forward(features)
        delta = cotangent
        for layer in range(len(coefs) - 1, -1, -1):
            grad = delta @ coefs[layer].T
            if layer > 0:
                delta = grad * (pre_activations[layer - 1] > 0)
        return grad

    def predict_proba(self, features) -> np.ndarray:
        """
        Probability vectors of shape (n, C); a single feature vector is treated as one row.

        Raises:
            DataError: If the feature width does not match the trained width.
        """
        features = self._as_matrix(features)
        if features.shape[0] == 0:
            return np.zeros((0, self.class_count))
        if self._leaf_tables is not None:
            trees = self._trees
            proba = np.zeros((features.shape[0], self.class_count))
            for tree, table in zip(trees, self._leaf_tables):
                proba += table[tree.apply(features.astype(np.float32))]
            return proba / len(trees)
        if self.differentiable:
            return scipy.special.softmax(self.logits(features), axis=1)
        return self.estimator.predict_proba(features)

    def predict(self, features) -> np.ndarray:
        return self.predict_proba(features).argmax(axis=1)

    def loss(self, features, labels) -> np.ndarray:
        """Per-sample cross-entropy of the predicted probabilities."""
        proba = self.predict_proba(features)
        labels = np.atleast_1d(np.asarray(labels, dtype=int))
        picked = proba[np.arange(proba.shape[0]), labels]
        return -np.log(np.clip(picked, 1e-12, None))

    def input_gradient(self, features, target_class) -> np.ndarray:
        """
        Gradient of the cross-entropy loss at label ``target_class`` with respect to the input.

        Input:
            features (np.ndarray): One feature vector (d,) or a matrix (n, d).
            target_class (int or np.ndarray): Label of every row.

        Returns:
            np.ndarray: Gradient with the shape of ``features``.

        Raises:
            NotDifferentiableError: If the member is tree-based.
        """
        self._require_gradients()
        single = np.asarray(features).ndim == 1
        features = self._as_matrix(features)
        targets = np.broadcast_to(np.asarray(target_class, dtype=int), (features.shape[0],))
        residual = scipy.special.softmax(self.logits(features), axis=1)
        residual[np.arange(features.shape[0]), targets] -= 1.0
        grad = self.logit_vjp(features, residual)
        return grad[0] if single else grad

    def evaluate_model(self, data, *, show: bool = False) -> dict:
        """
        Evaluate the member on a labeled dataset with the scikit-learn classification report.

        Input:
            data (LabeledDataset): The evaluation split.
            show (bool): Default is False. If True, print the classification report.

        Returns:
            report (dict): The classification report.
        """
        if not isinstance(show, bool):
            raise TypeError("Show must be a boolean.")
        predictions = self.predict(data.features)
        labels = list(range(self.class_count))
        if show:
            print(classification_report(data.labels, predictions, labels=labels, zero_division=0))
        self.report = classification_report(
            data.labels, predictions, labels=labels, output_dict=True, zero_division=0
        )
        return self.report

    def save_model(self, filepath: str):
        """
        Save the member to a joblib file together with its spec and format version.

        Raises:
            TypeError: If the filepath is not a string.
        """
        if not isinstance(filepath, str):
            raise TypeError("Filepath must be a string.")
        payload = {"format_version": FORMAT_VERSION, "spec": asdict(self.spec), "model": self}
        with atomic_target(filepath) as temp_path:
            joblib.dump(payload, temp_path)


def _final_loss(estimator, features, labels) -> float:
    if hasattr(estimator, "loss_"):
        return float(estimator.loss_)
    return float(log_loss(labels, estimator.predict_proba(features), labels=estimator.classes_))


def fit(spec: ClassifierSpec, train) -> TrainedModel:
    """
    Fit one ensemble member on a standardized training split.

    A non-converged optimizer is reported as a ConvergenceWarning carrying the final loss.

    Raises:
        DataError: If the training labels contain fewer than two classes or miss a class.
    """
    present = np.unique(train.labels)
    if present.size < 2:
        raise DataError("Fitting a classifier needs at least 2 classes.")
    if present.size != train.class_count:
        raise DataError("Training labels must cover every class.")
    estimator = spec.build()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        estimator.fit(train.features, train.labels)
    for record in caught:
        if issubclass(record.category, ConvergenceWarning):
            loss = _final_loss(estimator, train.features, train.labels)
            warnings.warn(
                f"The {spec.paradigm} optimizer did not converge; final loss {loss:.6f}.",
                ConvergenceWarning,
            )
            logger.warning("%s did not converge (final loss %.6f)", spec.paradigm, loss)
        else:
            warnings.warn(record.message, record.category)
    return TrainedModel(spec, estimator, train.class_count, train.n_features)


def _fit_member(spec, train):
    try:
        return fit(spec, train)
    except DataError:
        raise
    except Exception as exc:
        raise GateError(f"Could not fit the {spec.paradigm} member: {exc}") from exc


def fit_ensemble(specs: list, train, jobs: int = 1) -> list:
    """
    Fit the members concurrently with joblib; the result keeps the order of ``specs``.

    Raises:
        GateError: If a member cannot be fitted.
    """
    if len({s.paradigm for s in specs}) != len(specs):
        raise ValueError("Ensemble paradigms must be distinct.")
    return joblib.Parallel(n_jobs=jobs)(joblib.delayed(_fit_member)(s, train) for s in specs)


@dataclass
class EnsembleOutput:
    prob_matrix: np.ndarray
    votes: np.ndarray
    ens_prob: np.ndarray
    ens_vote: int
    disagreement: float


@dataclass
class EnsembleBatch:
    """
    Ensemble forward pass of n samples.

    Attributes:
        prob_tensor (np.ndarray): Member probabilities, shape (n, 6, C).
        votes (np.ndarray): Member votes, shape (n, 6).
        ens_prob (np.ndarray): Mean member distribution, shape (n, C).
        ens_vote (np.ndarray): Plurality vote, shape (n,).
        disagreement (np.ndarray): Mean per-class member variance, shape (n,).
    """

    prob_tensor: np.ndarray
    votes: np.ndarray
    ens_prob: np.ndarray
    ens_vote: np.ndarray
    disagreement: np.ndarray

    def __len__(self):
        return self.ens_vote.shape[0]

    def __getitem__(self, index: int) -> EnsembleOutput:
        return EnsembleOutput(
            prob_matrix=self.prob_tensor[index],
            votes=self.votes[index],
            ens_prob=self.ens_prob[index],
            ens_vote=int(self.ens_vote[index]),
            disagreement=float(self.disagreement[index]),
        )

    def take(self, indices) -> "EnsembleBatch":
        return EnsembleBatch(
            self.prob_tensor[indices],
            self.votes[indices],
            self.ens_prob[indices],
            self.ens_vote[indices],
            self.disagreement[indices],
        )


def plurality_vote(votes: np.ndarray, ens_prob: np.ndarray) -> np.ndarray:
    """
    Majority vote of member predictions.

    Ties between the most-voted classes go to the highest ensemble probability, then to the
    lowest class index.
    """
    votes = np.atleast_2d(votes)
    ens_prob = np.atleast_2d(ens_prob)
    counts = np.zeros_like(ens_prob)
    np.add.at(counts, (np.arange(votes.shape[0])[:, None], votes), 1.0)
    tied = counts == counts.max(axis=1, keepdims=True)
    return np.where(tied, ens_prob, -np.inf).argmax(axis=1)


def ensemble_forward_batch(models: list, features) -> EnsembleBatch:
    """
    Run every member on a feature matrix and combine the outputs.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    prob_tensor = np.stack([m.predict_proba(features) for m in models], axis=1)
    votes = prob_tensor.argmax(axis=2)
    ens_prob = prob_tensor.mean(axis=1)
    if features.shape[0] == 0:
        ens_vote = np.zeros(0, dtype=int)
    else:
        ens_vote = plurality_vote(votes, ens_prob)
    return EnsembleBatch(prob_tensor, votes, ens_prob, ens_vote, disagreement_batch(prob_tensor))


def ensemble_forward(models: list, x) -> EnsembleOutput:
    """Ensemble forward pass of one feature vector."""
    return ensemble_forward_batch(models, np.asarray(x, dtype=float)[None, :])[0]


class StandardEnsemble:
    """
    The undefended ensemble: mean member probabilities and plurality vote.
    """

    def __init__(self, models: list):
        self.models = list(models)

    @property
    def class_count(self) -> int:
        return self.models[0].class_count

    def predict_proba(self, features) -> np.ndarray:
        return ensemble_forward_batch(self.models, features).ens_prob

    def predict(self, features) -> np.ndarray:
        return ensemble_forward_batch(self.models, features).ens_vote


def _check_model_weights(model_weights: np.ndarray):
    if np.any(model_weights < 0) or abs(model_weights.sum(axis=-1) - 1.0).max() > 1e-9:
        raise DataError("Model weights must be non-negative and sum to 1.")


def weighted_vote_batch(prob_tensor: np.ndarray, model_weights: np.ndarray) -> np.ndarray:
    """
    Argmax of the model-weighted class probabilities for every sample.

    Input:
        prob_tensor (np.ndarray): Member probabilities, shape (n, M, C).
        model_weights (np.ndarray): Shape (M,) shared by all samples, or (n, M).
    """
    model_weights = np.asarray(model_weights, dtype=float)
    _check_model_weights(model_weights)
    if model_weights.ndim == 1:
        weighted = np.einsum("nmc,m->nc", prob_tensor, model_weights)
    else:
        weighted = np.einsum("nmc,nm->nc", prob_tensor, model_weights)
    return weighted.argmax(axis=1)


def weighted_vote(prob_matrix, model_weights) -> int:
    """
    Class with the highest model-weighted probability; ties go to the lowest class index.

    Raises:
        DataError: If the weights are off the simplex by more than 1e-9.
    """
    prob_matrix = np.asarray(prob_matrix, dtype=float)
    return int(weighted_vote_batch(prob_matrix[None, :, :], model_weights)[0])


def select_surrogate(models: list) -> TrainedModel:
    """The MLP member, or the logistic regression member if there is no MLP."""
    for paradigm in ("mlp", "logistic_regression"):
        for model in models:
            if model.paradigm == paradigm:
                return model
    raise NotDifferentiableError("The ensemble has no differentiable member.")
