"""
This module provides functions for reading, preprocessing and splitting flow datasets, and for
loading the trained members of the ensemble.
"""

import hashlib
import logging
import os
import re
import warnings
from dataclasses import dataclass, field, replace

import joblib
import numpy as np
import pandas as pd
import scipy.linalg
from sklearn.covariance import EmpiricalCovariance

from .config import FORMAT_VERSION, DatasetConfig, SplitConfig
from .exceptions import (
    DataError,
    IllConditionedError,
    ManifestError,
    SchemaError,
    StratificationError,
)
from .output import atomic_target, write_json

logger = logging.getLogger(__name__)

# Relative threshold under which a column counts as constant.
_CONSTANT_TOLERANCE = 1e-12
_INVERSE_TOLERANCE = 1e-8


@dataclass
class LabeledDataset:
    """
    A feature matrix with dense integer class labels.

    Attributes:
        features (np.ndarray): Matrix of shape (n, d).
        labels (np.ndarray): Integer labels in [0, class_count - 1].
        class_count (int): Number of classes C.
        feature_sigma (np.ndarray): Training standard deviation of every raw feature.
        schema (list): Ordered feature names.
        class_names (list): Original label value of every dense class id.
        standardized (bool): Whether the features are in standardized units.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    feature_sigma: np.ndarray
    schema: list
    class_names: list = field(default_factory=list)
    standardized: bool = False

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.feature_sigma = np.asarray(self.feature_sigma, dtype=float)
        if self.features.ndim != 2:
            raise DataError("Features must be a two-dimensional matrix.")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError("Features and labels must have the same number of rows.")
        if self.features.shape[1] != len(self.schema):
            raise DataError("The schema must name every feature column.")
        if not np.all(np.isfinite(self.features)):
            raise DataError("Features contain non-finite values.")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError(f"Labels must lie in [0, {self.class_count - 1}].")
        if not self.class_names:
            self.class_names = [str(c) for c in range(self.class_count)]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        """Rows selected by ``indices``, keeping schema and statistics."""
        indices = np.asarray(indices, dtype=int)
        return replace(self, features=self.features[indices], labels=self.labels[indices])

    def space_sigma(self) -> np.ndarray:
        """
        Per-feature standard deviation expressed in the units of ``features``.

        Standardized features have unit training deviation, so an offset of ``s * sigma_i`` in
        raw units is an offset of ``s`` in standardized units.
        """
        if self.standardized:
            return np.ones(self.n_features)
        return self.feature_sigma.copy()


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not 0 < f < 1 for f in fractions):
            raise ValueError("Split fractions must each lie in (0, 1).")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("Split fractions must sum to 1.")

    @classmethod
    def from_config(cls, split: SplitConfig, seed: int) -> "SplitSpec":
        return cls(split.train, split.val, split.test, seed)


@dataclass
class Scaler:
    """
    Zero-mean unit-variance scaling fitted on training data.

    Attributes:
        means (np.ndarray): Training mean of every kept column.
        feature_sigma (np.ndarray): Training population standard deviation of every kept column.
        schema (list): Names of the kept columns.
        input_schema (list): Names of all columns the scaler was fitted on.
        dropped_columns (list): Constant columns removed at fit time.
    """

    means: np.ndarray
    feature_sigma: np.ndarray
    schema: list
    input_schema: list
    dropped_columns: list = field(default_factory=list)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.feature_sigma = np.asarray(self.feature_sigma, dtype=float)

    def _kept_columns(self, schema: list) -> np.ndarray:
        missing = [name for name in self.schema if name not in schema]
        if missing:
            raise SchemaError(f"Missing feature columns: {', '.join(missing)}.")
        position = {name: i for i, name in enumerate(schema)}
        return np.array([position[name] for name in self.schema], dtype=int)

    def transform(self, features: np.ndarray, schema: list = None) -> np.ndarray:
        """
        Scale a raw feature matrix. Columns are selected by name when a schema is given,
        otherwise the matrix must have the fitted input width.
        """
        features = np.asarray(features, dtype=float)
        schema = self.input_schema if schema is None else schema
        if features.ndim != 2 or features.shape[1] != len(schema):
            raise DataError(f"Expected {len(schema)} feature columns, got {features.shape[-1]}.")
        columns = self._kept_columns(schema)
        return (features[:, columns] - self.means) / self.feature_sigma

    def inverse(self, features: np.ndarray) -> np.ndarray:
        """Map standardized features back to raw units (kept columns only)."""
        return np.asarray(features, dtype=float) * self.feature_sigma + self.means

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "means": self.means.tolist(),
            "feature_sigma": self.feature_sigma.tolist(),
            "schema": list(self.schema),
            "input_schema": list(self.input_schema),
            "dropped_columns": list(self.dropped_columns),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Scaler":
        try:
            return cls(
                means=payload["means"],
                feature_sigma=payload["feature_sigma"],
                schema=payload["schema"],
                input_schema=payload["input_schema"],
                dropped_columns=payload.get("dropped_columns", []),
            )
        except KeyError as exc:
            raise ManifestError(f"Scaler file is missing the '{exc.args[0]}' entry.") from exc


@dataclass
class BenignDistribution:
    """
    Gaussian model of clean benign traffic used by the anomaly signal.
    """

    mu: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray
    ridge_lambda: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.sigma_inv = np.asarray(self.sigma_inv, dtype=float)

    @property
    def n_features(self) -> int:
        return self.mu.shape[0]

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "sigma_inv": self.sigma_inv.tolist(),
            "ridge_lambda": float(self.ridge_lambda),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BenignDistribution":
        return cls(payload["mu"], payload["sigma"], payload["sigma_inv"], payload["ridge_lambda"])


def _parse_error_row(message: str):
    match = re.search(r"line (\d+)", message)
    return int(match.group(1)) if match else None


def load_csv(filepath: str, label_column: str = "label") -> LabeledDataset:
    """
    Load a flow-feature CSV file with a header row.

    Duplicate rows are removed first. Infinite values count as missing, and missing cells are
    imputed with the median of the column's present values. Labels are mapped to dense ids
    0..C-1 in sorted order of the original values.

    Input:
        filepath (str): Path to the CSV file.
        label_column (str): Name of the class label column.

    Returns:
        LabeledDataset: The raw (unstandardized) dataset.

    Raises:
        TypeError: If the file path or label column is not a string.
        FileNotFoundError: If the file does not exist.
        DataError: If the file cannot be parsed (the message names the row) or the label
            column is missing.
        SchemaError: If a feature cell is not numeric.
    """
    if not isinstance(filepath, str) or not isinstance(label_column, str):
        raise TypeError("The file path and label column must be strings.")
    if not os.path.isfile(filepath):
        raise FileNotFoundError(f"File '{filepath}' does not exist.")
    try:
        frame = pd.read_csv(filepath, header=0, encoding="utf-8")
    except pd.errors.ParserError as exc:
        row = _parse_error_row(str(exc))
        where = f" at row {row}" if row is not None else ""
        raise DataError(f"Malformed CSV file '{filepath}'{where}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"CSV file '{filepath}' has no header row.") from exc
    if label_column not in frame.columns:
        raise DataError(f"Label column '{label_column}' not found in '{filepath}'.")
    if frame[label_column].isna().any():
        row = int(np.flatnonzero(frame[label_column].isna().to_numpy())[0]) + 2
        raise DataError(f"Missing label at row {row} of '{filepath}'.")

    frame = frame.drop_duplicates().reset_index(drop=True)
    features = frame.drop(columns=[label_column])
    numeric = features.apply(pd.to_numeric, errors="coerce")
    invalid = numeric.isna() & features.notna()
    if invalid.to_numpy().any():
        row, col = np.argwhere(invalid.to_numpy())[0]
        raise SchemaError(
            f"Non-numeric value {features.iat[row, col]!r} in column "
            f"'{features.columns[col]}' at row {row + 2}."
        )
    numeric = numeric.replace([np.inf, -np.inf], np.nan)
    numeric = numeric.fillna(numeric.median())
    empty = [str(c) for c in numeric.columns[numeric.isna().any()]]
    if empty:
        raise SchemaError(f"Columns without any numeric value: {', '.join(empty)}.")

    class_values, labels = np.unique(frame[label_column].to_numpy(), return_inverse=True)
    matrix = numeric.to_numpy(dtype=float)
    logger.info(
        "Loaded %d rows, %d features, %d classes from %s",
        matrix.shape[0],
        matrix.shape[1],
        len(class_values),
        filepath,
    )
    return LabeledDataset(
        features=matrix,
        labels=labels.reshape(-1),
        class_count=len(class_values),
        feature_sigma=matrix.std(axis=0) if matrix.shape[0] else np.zeros(matrix.shape[1]),
        schema=[str(c) for c in numeric.columns],
        class_names=[str(v) for v in class_values],
    )


def standardize_fit(train: LabeledDataset) -> Scaler:
    """
    Fit zero-mean unit-variance scaling on the training split.

    Constant columns are dropped with a warning and listed in ``dropped_columns``.

    Raises:
        DataError: If the training split is empty or every column is constant.
    """
    if train.n_samples == 0:
        raise DataError("Cannot fit a scaler on an empty training split.")
    means = train.features.mean(axis=0)
    sigma = train.features.std(axis=0)
    keep = sigma > _CONSTANT_TOLERANCE * np.maximum(1.0, np.abs(means))
    dropped = [name for name, kept in zip(train.schema, keep) if not kept]
    if dropped:
        warnings.warn(f"Dropping constant feature columns: {', '.join(dropped)}.")
    if not keep.any():
        raise DataError("Every feature column is constant on the training split.")
    return Scaler(
        means=means[keep],
        feature_sigma=sigma[keep],
        schema=[name for name, kept in zip(train.schema, keep) if kept],
        input_schema=list(train.schema),
        dropped_columns=dropped,
    )


def standardize_apply(scaler: Scaler, data: LabeledDataset) -> LabeledDataset:
    """
    Scale a dataset with statistics fitted on the training split.
    """
    return replace(
        data,
        features=scaler.transform(data.features, data.schema),
        feature_sigma=scaler.feature_sigma.copy(),
        schema=list(scaler.schema),
        standardized=True,
    )


def stratified_split_indices(labels: np.ndarray, spec: SplitSpec, class_names: list = None):
    """
    Per-class shuffled split of row indices into train, validation and test parts.

    Every class contributes round(n_c * fraction) rows to the validation and test parts (at
    least one each) and the rest to training.

    Returns:
        tuple: Sorted index arrays (train, val, test).

    Raises:
        StratificationError: If a class has fewer than three rows.
    """
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(spec.seed)
    parts = ([], [], [])
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        name = class_names[cls] if class_names else str(cls)
        if members.size < 3:
            raise StratificationError(
                f"Class '{name}' has {members.size} samples; at least 3 are needed to split."
            )
        members = rng.permutation(members)
        n_val = max(1, int(round(members.size * spec.val_fraction)))
        n_test = max(1, int(round(members.size * spec.test_fraction)))
        if members.size - n_val - n_test < 1:
            n_val, n_test = 1, 1
        parts[1].append(members[:n_val])
        parts[2].append(members[n_val : n_val + n_test])
        parts[0].append(members[n_val + n_test :])
    return tuple(np.sort(np.concatenate(part)) for part in parts)


def stratified_split(data: LabeledDataset, spec: SplitSpec):
    """
    Split a dataset into train, validation and test parts with per-class proportions.

    Returns:
        tuple: (train, val, test) LabeledDataset objects.
    """
    train_idx, val_idx, test_idx = stratified_split_indices(data.labels, spec, data.class_names)
    return data.subset(train_idx), data.subset(val_idx), data.subset(test_idx)


def benign_stats(
    train: LabeledDataset, benign_label: int = 0, ridge_lambda: float = None
) -> BenignDistribution:
    """
    Estimate the benign distribution from clean training traffic.

    Sigma is the population covariance of the benign rows. The inverse is taken of
    ``Sigma + ridge_lambda * I``; the default ridge is ``1e-6 * trace(Sigma) / d``.

    Input:
        train (LabeledDataset): Standardized training split.
        benign_label (int): Dense class id of benign traffic.
        ridge_lambda (float): Ridge added to the diagonal. None selects the default.

    Returns:
        BenignDistribution: The fitted distribution.

    Raises:
        IllConditionedError: If there are fewer than d + 1 benign rows or the regularized
            covariance cannot be inverted accurately.
    """
    benign = train.features[train.labels == benign_label]
    d = train.n_features
    if benign.shape[0] < d + 1:
        raise IllConditionedError(
            f"Only {benign.shape[0]} benign rows for {d} features; need at least {d + 1} "
            "or a larger ridge_lambda."
        )
    estimator = EmpiricalCovariance(assume_centered=False).fit(benign)
    sigma = estimator.covariance_
    if ridge_lambda is None:
        trace = float(np.trace(sigma))
        ridge_lambda = 1e-6 * trace / d if trace > 0 else 1e-6
    regularized = sigma + ridge_lambda * np.eye(d)
    try:
        factor = scipy.linalg.cho_factor(regularized, lower=True)
        sigma_inv = scipy.linalg.cho_solve(factor, np.eye(d))
    except scipy.linalg.LinAlgError as exc:
        raise IllConditionedError(
            f"Benign covariance is not positive definite; use a larger ridge_lambda "
            f"than {ridge_lambda:.3g}."
        ) from exc
    sigma_inv = (sigma_inv + sigma_inv.T) / 2
    residual = np.max(np.abs(sigma_inv @ regularized - np.eye(d)))
    if residual > _INVERSE_TOLERANCE:
        raise IllConditionedError(
            f"Covariance inverse residual {residual:.3g} exceeds {_INVERSE_TOLERANCE}; "
            f"use a larger ridge_lambda than {ridge_lambda:.3g}."
        )
    logger.debug("Benign distribution from %d rows, ridge %.3g", benign.shape[0], ridge_lambda)
    return BenignDistribution(estimator.location_, sigma, sigma_inv, ridge_lambda)


def synth_generate(
    classes: int = 7, dims: int = 20, per_class: int = 1000, separation: float = 6.0, seed: int = 0
) -> LabeledDataset:
    """
    Generate Gaussian class clusters as a desk-scale stand-in for flow data.

    Class means sit on scaled orthonormal directions so that every pair of means is
    ``separation`` apart (random unit directions when there are more classes than dimensions).
    Noise is unit-variance and isotropic. Class 0 is benign.

    Raises:
        ValueError: If classes or dims are below 2.
    """
    if classes < 2 or dims < 2:
        raise ValueError("Synthetic data needs at least 2 classes and 2 dimensions.")
    if per_class < 1:
        raise ValueError("Synthetic data needs at least one sample per class.")
    rng = np.random.default_rng(seed)
    if classes <= dims:
        basis, _ = np.linalg.qr(rng.standard_normal((dims, classes)))
        directions = basis.T
    else:
        directions = rng.standard_normal((classes, dims))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * (separation / np.sqrt(2.0))
    means -= means.mean(axis=0)
    labels = np.repeat(np.arange(classes), per_class)
    features = means[labels] + rng.standard_normal((labels.size, dims))
    order = rng.permutation(labels.size)
    features, labels = features[order], labels[order]
    return LabeledDataset(
        features=features,
        labels=labels,
        class_count=classes,
        feature_sigma=features.std(axis=0),
        schema=[f"f{i}" for i in range(dims)],
        class_names=["benign"] + [f"attack_{c}" for c in range(1, classes)],
    )


def dataset_fingerprint(data: LabeledDataset) -> str:
    """SHA-256 of the feature matrix and label bytes."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(data.features, dtype=np.float64).tobytes())
    digest.update(np.ascontiguousarray(data.labels, dtype=np.int64).tobytes())
    return digest.hexdigest()


def load_dataset(dataset: DatasetConfig, seed: int) -> LabeledDataset:
    """
    Load the raw dataset named by the configuration (CSV file or synthetic generator).
    """
    if dataset.source == "csv":
        data = load_csv(dataset.csv_path, dataset.label_column)
    else:
        synth = dataset.synth
        data = synth_generate(synth.classes, synth.dims, synth.per_class, synth.separation, seed)
    if not 0 <= dataset.benign_label < data.class_count:
        raise DataError(f"Benign label {dataset.benign_label} is not a class of the dataset.")
    return data


def prepare_splits(data: LabeledDataset, split: SplitSpec):
    """
    Split a raw dataset and standardize every part with the training statistics.

    Returns:
        tuple: (scaler, train, val, test).
    """
    train, val, test = stratified_split(data, split)
    scaler = standardize_fit(train)
    return (
        scaler,
        standardize_apply(scaler, train),
        standardize_apply(scaler, val),
        standardize_apply(scaler, test),
    )


def save_split(data: LabeledDataset, filepath: str):
    """
    Write a standardized split as CSV with a trailing ``label`` column of dense ids.
    """
    frame = pd.DataFrame(data.features, columns=data.schema)
    frame["label"] = data.labels
    with atomic_target(filepath) as temp_path:
        frame.to_csv(temp_path, index=False, float_format="%.17g")


def load_split(filepath: str, scaler: Scaler, class_count: int, class_names: list = None):
    """
    Read a split written by ``save_split`` back into a standardized dataset.

    Raises:
        ManifestError: If the file does not exist.
        SchemaError: If the columns do not match the scaler schema.
    """
    if not os.path.isfile(filepath):
        raise ManifestError(f"Data split '{filepath}' does not exist.")
    frame = pd.read_csv(filepath, header=0)
    if list(frame.columns) != list(scaler.schema) + ["label"]:
        raise SchemaError(f"Columns of '{filepath}' do not match the trained schema.")
    return LabeledDataset(
        features=frame[scaler.schema].to_numpy(dtype=float),
        labels=frame["label"].to_numpy(dtype=int),
        class_count=class_count,
        feature_sigma=scaler.feature_sigma,
        schema=list(scaler.schema),
        class_names=class_names or [],
        standardized=True,
    )


def load_feature_rows(filepath: str, scaler: Scaler, label_column: str = None) -> np.ndarray:
    """
    Read raw flow rows for inference and scale them with the trained scaler.

    A label column, if present, is ignored. An empty file yields a (0, d) matrix.
    """
    if not os.path.isfile(filepath):
        raise FileNotFoundError(f"File '{filepath}' does not exist.")
    try:
        frame = pd.read_csv(filepath, header=0)
    except pd.errors.EmptyDataError:
        return np.zeros((0, len(scaler.schema)))
    except pd.errors.ParserError as exc:
        row = _parse_error_row(str(exc))
        where = f" at row {row}" if row is not None else ""
        raise DataError(f"Malformed CSV file '{filepath}'{where}: {exc}") from exc
    if label_column and label_column in frame.columns:
        frame = frame.drop(columns=[label_column])
    missing = [name for name in scaler.schema if name not in frame.columns]
    if missing:
        raise SchemaError(f"Missing feature columns: {', '.join(missing)}.")
    numeric = frame[scaler.schema].apply(pd.to_numeric, errors="coerce")
    if (numeric.isna() & frame[scaler.schema].notna()).to_numpy().any():
        raise SchemaError(f"Non-numeric feature values in '{filepath}'.")
    numeric = numeric.replace([np.inf, -np.inf], np.nan)
    fill = pd.Series(scaler.means, index=scaler.schema)
    matrix = numeric.fillna(fill).to_numpy(dtype=float)
    if matrix.shape[0] == 0:
        return np.zeros((0, len(scaler.schema)))
    return (matrix - scaler.means) / scaler.feature_sigma


def write_scaler(scaler: Scaler, filepath: str):
    write_json(scaler.to_json(), filepath)


def load_model(filepath: str):
    """
    Load a saved ensemble member from a binary file with joblib.

    Input:
        filepath (str): The file path of the saved model.

    Returns:
        TrainedModel: The loaded model object.

    Raises:
        TypeError: If the file path is not a string.
        ManifestError: If the file does not exist or has an unknown format version.
    """
    if not isinstance(filepath, str):
        raise TypeError("The file path must be a string.")
    try:
        payload = joblib.load(filepath)
    except FileNotFoundError as exc:
        raise ManifestError(f"Model file not found at {filepath}.") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise ManifestError(f"Model file {filepath} has an unsupported format.")
    return payload["model"]
