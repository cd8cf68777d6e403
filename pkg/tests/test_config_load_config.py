"""
This file tests loading and validating run configurations.
"""

import os
import tempfile
import unittest
from unittest.mock import patch

from amdslab.config import component_seed, config_from_dict, load_config
from amdslab.exceptions import ConfigError


class TestLoadConfig(unittest.TestCase):
    """
    Test the load_config function and the RunConfig validation.
    Test cases:
    - test_defaults: Loading without a file gives the default thresholds.
    - test_desk_config: The shipped desk configuration is valid and raises the attack budgets
        above the package defaults.
    - test_unknown_key: An unknown key raises a ConfigError naming it.
    - test_wrong_type: A string where a number is expected raises a ConfigError.
    - test_invalid_threshold: A threshold outside (0, 1) raises a ConfigError.
    - test_missing_category: Attack kinds without a distribution attack are rejected.
    - test_missing_file: A missing file raises a FileNotFoundError.
    - test_overrides: Command-line overrides and the output directory variable apply.
    - test_seed_offsets: Component seeds are derived from the master seed.
    """

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.config_path = os.path.join(self.temp_dir.name, "run.yaml")

    def tearDown(self):
        self.temp_dir.cleanup()

    def _write(self, text):
        with open(self.config_path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return self.config_path

    def test_defaults(self):
        with patch.dict(os.environ, {}, clear=False):
            os.environ.pop("AMDS_OUTPUT_DIR", None)
            config = load_config()
        self.assertEqual(config.seed, 42)
        self.assertEqual(config.thresholds.tau_conf, 0.85)
        self.assertEqual(config.thresholds.tau_disagree, 0.15)
        self.assertEqual(config.thresholds.target_fpr, 0.10)
        self.assertEqual(config.attacks.epsilon, 0.02)
        self.assertEqual(len(config.models.paradigms), 6)

    def test_desk_config(self):
        config = load_config("./configs/desk.yaml")
        self.assertEqual(config.dataset.synth.dims, 20)
        self.assertIn("pgd_l2", config.weights.exclude_from_learning)
        self.assertEqual((config.attacks.epsilon, config.attacks.scale), (0.5, 0.5))
        defaults = load_config().attacks
        self.assertEqual((defaults.epsilon, defaults.scale), (0.02, 0.05))

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as context:
            load_config(self._write("thresholds:\n  tau_confidence: 0.9\n"))
        self.assertIn("thresholds.tau_confidence", str(context.exception))

    def test_wrong_type(self):
        with self.assertRaises(ConfigError):
            load_config(self._write("attacks:\n  epsilon: large\n"))

    def test_invalid_threshold(self):
        with self.assertRaises(ConfigError):
            config_from_dict({"thresholds": {"tau_conf": 1.5}})

    def test_missing_category(self):
        with self.assertRaises(ConfigError):
            config_from_dict({"attacks": {"kinds": ["fgsm", "pgd_linf"]}})

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_config(os.path.join(self.temp_dir.name, "absent.yaml"))

    def test_overrides(self):
        path = self._write("seed: 7\noutput_dir: runs/a\n")
        with patch.dict(os.environ, {"AMDS_OUTPUT_DIR": "runs/env"}):
            config = load_config(path, {"seed": 11, "output_dir": None, "jobs": None})
            self.assertEqual(config.seed, 11)
            self.assertEqual(config.output_dir, "runs/env")
            config = load_config(path, {"output_dir": "runs/flag"})
            self.assertEqual(config.output_dir, "runs/flag")

    def test_seed_offsets(self):
        config = config_from_dict({"seed": 10})
        self.assertEqual(config.seed_for("models", 2), 112)
        self.assertEqual(component_seed(10, "split"), 11)
        with self.assertRaises(ConfigError):
            config.seed_for("unknown")


if __name__ == "__main__":
    unittest.main(verbosity=2)
