"""
This file tests reading, splitting and standardizing flow datasets.
"""

import unittest
import warnings

import numpy as np

from amdslab.exceptions import DataError, SchemaError, StratificationError
from amdslab.reader import (
    LabeledDataset,
    SplitSpec,
    load_csv,
    prepare_splits,
    standardize_apply,
    standardize_fit,
    stratified_split,
    synth_generate,
)


class TestLoadCsv(unittest.TestCase):
    """
    Test the load_csv function.
    Test cases:
    - test_load_csv: Duplicates are removed and labels are mapped to dense ids.
    - test_missing_cell_imputed: A missing cell takes the column median.
    - test_non_numeric_cell: A non-numeric cell raises a SchemaError naming the row.
    - test_missing_label_column: An unknown label column raises a DataError.
    - test_wrong_input: A non-string path raises a TypeError; a missing file a FileNotFoundError.
    """

    def setUp(self):
        self.filepath = "./testcase_data/flows.csv"

    def test_load_csv(self):
        data = load_csv(self.filepath)
        self.assertEqual(data.n_samples, 8)
        self.assertEqual(data.schema, ["duration", "bytes", "packets"])
        self.assertEqual(data.class_count, 3)
        self.assertEqual(data.class_names, ["2", "5", "9"])
        np.testing.assert_array_equal(data.labels, [0, 1, 2, 1, 2, 0, 1, 2])

    def test_missing_cell_imputed(self):
        data = load_csv(self.filepath)
        self.assertEqual(data.features[3, 1], 500.0)

    def test_non_numeric_cell(self):
        with self.assertRaises(SchemaError) as context:
            load_csv("./testcase_data/flows_nonnumeric.csv")
        self.assertIn("row 3", str(context.exception))

    def test_missing_label_column(self):
        with self.assertRaises(DataError):
            load_csv(self.filepath, label_column="attack")

    def test_wrong_input(self):
        with self.assertRaises(TypeError):
            load_csv(123)
        with self.assertRaises(FileNotFoundError):
            load_csv("./testcase_data/absent.csv")


class TestSplitAndStandardize(unittest.TestCase):
    """
    Test stratified splitting and standardization.
    Test cases:
    - test_split_partitions_rows: The three parts are disjoint, complete and cover every class.
    - test_split_is_deterministic: The same seed gives the same split.
    - test_small_class: A class with fewer than three rows raises a StratificationError.
    - test_standardize_train_moments: Standardized training columns have mean 0 and std 1.
    - test_constant_column_dropped: A constant column is dropped with a warning.
    """

    def setUp(self):
        self.data = synth_generate(classes=3, dims=4, per_class=50, seed=0)
        self.spec = SplitSpec(0.6, 0.2, 0.2, seed=5)

    def test_split_partitions_rows(self):
        train, val, test = stratified_split(self.data, self.spec)
        self.assertEqual(train.n_samples + val.n_samples + test.n_samples, 150)
        for part in (train, val, test):
            self.assertEqual(set(part.labels.tolist()), {0, 1, 2})
        self.assertEqual(val.n_samples, 30)

    def test_split_is_deterministic(self):
        first = stratified_split(self.data, self.spec)[0]
        second = stratified_split(self.data, self.spec)[0]
        np.testing.assert_array_equal(first.features, second.features)

    def test_small_class(self):
        data = LabeledDataset(
            features=np.arange(10.0).reshape(5, 2),
            labels=[0, 0, 0, 1, 1],
            class_count=2,
            feature_sigma=np.ones(2),
            schema=["a", "b"],
        )
        with self.assertRaises(StratificationError):
            stratified_split(data, self.spec)

    def test_standardize_train_moments(self):
        _, train, val, _ = prepare_splits(self.data, self.spec)
        np.testing.assert_allclose(train.features.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(train.features.std(axis=0), 1.0, atol=1e-9)
        self.assertTrue(val.standardized)
        np.testing.assert_array_equal(val.space_sigma(), np.ones(4))

    def test_constant_column_dropped(self):
        features = np.column_stack([np.arange(9.0), np.full(9, 3.0)])
        data = LabeledDataset(features, [0, 1, 2] * 3, 3, features.std(axis=0), ["a", "b"])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scaler = standardize_fit(data)
        self.assertTrue(any("b" in str(w.message) for w in caught))
        self.assertEqual(scaler.schema, ["a"])
        self.assertEqual(standardize_apply(scaler, data).n_features, 1)


if __name__ == "__main__":
    unittest.main(verbosity=2)
