"""
This file tests writing report tables and drawing the report figures.
"""

import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

import amdslab as amds
from amdslab.output import read_json, render_report, render_table, write_table


def weights_table():
    return {
        "table": "weights",
        "title": "Learned signal weights",
        "columns": ["weights", "alpha", "beta", "gamma", "auc"],
        "rows": [
            {"weights": "fgsm", "alpha": 0.1, "beta": 0.8, "gamma": 0.1, "auc": 0.91},
            {"weights": "morphing", "alpha": 0.0, "beta": 0.1, "gamma": 0.9, "auc": None},
        ],
        "checks": {"morphing_anomaly_dominant": np.bool_(True)},
    }


def baselines_table():
    per_attack = {"fgsm": 0.4, "morphing": 0.7}
    return {
        "table": "baselines",
        "title": "Baseline comparison",
        "columns": ["system", "clean_accuracy"],
        "rows": [{"system": "standard", "clean_accuracy": 0.98}],
        "per_attack_accuracy": {
            "standard": per_attack,
            "adversarial_training": per_attack,
            "amds": {"fgsm": 0.8, "morphing": 0.9},
        },
        "single_best": "boosted_trees_a",
    }


class TestWriteTable(unittest.TestCase):
    """
    Test rendering and writing tables.
    Test cases:
    - test_render_table: The text has the title, the rows, n/a for missing values and summaries.
    - test_write_table: JSON and text files are written and the JSON holds plain types.
    - test_report_file_names: Every report table is written under its numbered file name.
    - test_render_report_empty: A directory without tables raises a FileNotFoundError.
    """

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_render_table(self):
        text = render_table(baselines_table())
        self.assertTrue(text.startswith("Baseline comparison"))
        self.assertIn("0.9800", text)
        self.assertIn("boosted_trees_a", text)
        self.assertIn("n/a", render_table(weights_table()))

    def test_write_table(self):
        write_table(weights_table(), self.temp_dir.name)
        payload = read_json(os.path.join(self.temp_dir.name, "table1_weights.json"))
        self.assertIs(payload["checks"]["morphing_anomaly_dominant"], True)
        self.assertTrue(os.path.isfile(os.path.join(self.temp_dir.name, "table1_weights.txt")))

    def test_report_file_names(self):
        for name in ["weights", "two_stage", "cascade", "baselines", "ablation", "scaling", "adaptive"]:
            table = {"table": name, "title": name, "columns": ["a"], "rows": [{"a": 1}]}
            write_table(table, self.temp_dir.name)
        expected = [
            "table1_weights",
            "table2_twostage",
            "table3_cascade",
            "table4_baselines",
            "table5_ablation",
            "table6_scaling",
            "table7_adaptive",
        ]
        files = sorted(os.listdir(self.temp_dir.name))
        self.assertEqual(files, sorted(f"{stem}.{ext}" for stem in expected for ext in ("json", "txt")))

    def test_render_report_empty(self):
        with self.assertRaises(FileNotFoundError):
            render_report(self.temp_dir.name)


class TestPlots(unittest.TestCase):
    """
    Test the report figures.
    Test cases:
    - test_plot_attack_accuracy_with_filepath: The barplot is saved to the given file.
    - test_plot_attack_accuracy_without_filepath: The barplot is shown but not saved.
    - test_plot_attack_accuracy_missing_system: An unknown system raises a ValueError.
    - test_plot_weight_heatmap_with_filepath: The heatmap is saved to the given file.
    - test_plot_weight_heatmap_invalid_filepath: A non-string filepath raises a TypeError.
    - test_render_report_figures: The report renders every table and writes both figures.
    """

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.barplot_filepath = os.path.join(self.temp_dir.name, "attack_accuracy.png")
        self.heatmap_filepath = os.path.join(self.temp_dir.name, "weight_heatmap.png")

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_plot_attack_accuracy_with_filepath(self):
        amds.plot_attack_accuracy(baselines_table(), filepath=self.barplot_filepath)
        self.assertTrue(os.path.exists(self.barplot_filepath))

    @patch("matplotlib.pyplot.savefig")
    @patch("seaborn.barplot")
    @patch("matplotlib.pyplot.show")
    def test_plot_attack_accuracy_without_filepath(self, mock_show, mock_barplot, mock_savefig):
        amds.plot_attack_accuracy(baselines_table())
        mock_barplot.assert_called_once()
        mock_show.assert_called_once()
        mock_savefig.assert_not_called()

    def test_plot_attack_accuracy_missing_system(self):
        with self.assertRaises(ValueError):
            amds.plot_attack_accuracy(baselines_table(), systems=("standard", "single_best"))

    def test_plot_weight_heatmap_with_filepath(self):
        amds.plot_weight_heatmap(weights_table(), self.heatmap_filepath)
        self.assertTrue(os.path.exists(self.heatmap_filepath))

    def test_plot_weight_heatmap_invalid_filepath(self):
        with self.assertRaises(TypeError):
            amds.plot_weight_heatmap(weights_table(), 123)

    def test_render_report_figures(self):
        write_table(weights_table(), self.temp_dir.name)
        write_table(baselines_table(), self.temp_dir.name)
        names = render_report(self.temp_dir.name)
        self.assertEqual(names, ["weights", "baselines"])
        self.assertTrue(os.path.exists(self.barplot_filepath))
        self.assertTrue(os.path.exists(self.heatmap_filepath))


if __name__ == "__main__":
    unittest.main(verbosity=2)
