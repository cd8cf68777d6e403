"""
Configuration for the amdslab package.

Module constants hold the immutable defaults of the defense (thresholds, attack
hyperparameters, model paradigms). ``RunConfig`` is the validated, file-backed
configuration of one experiment run; it is loaded from YAML with ``load_config``.
"""

import dataclasses
import os
import typing
from dataclasses import dataclass, field

import yaml

from .exceptions import ConfigError

# Ensemble members, in model-index order.
VALID_PARADIGMS = [
    "decision_tree",
    "random_forest",
    "boosted_trees_a",
    "boosted_trees_b",
    "logistic_regression",
    "mlp",
]
DIFFERENTIABLE_PARADIGMS = ["logistic_regression", "mlp"]
ENSEMBLE_SIZE = 6

# Attack taxonomy.
GRADIENT_ATTACKS = ["fgsm", "pgd_linf", "pgd_l2", "cw_l2", "spsa"]
DISTRIBUTION_ATTACKS = ["injection", "morphing"]
ADAPTIVE_ATTACKS = ["adaptive_baseline", "adaptive_improved"]
VALID_ATTACKS = GRADIENT_ATTACKS + DISTRIBUTION_ATTACKS + ADAPTIVE_ATTACKS
CATEGORIES = ["gradient", "distribution"]
ATTACK_CATEGORIES = {
    **{kind: "gradient" for kind in GRADIENT_ATTACKS},
    **{kind: "distribution" for kind in DISTRIBUTION_ATTACKS},
}

# Attack hyperparameters.
EPSILON = 0.02
PGD_STEPS = 20
PGD_STEP_SIZE = 0.005
CW_BINARY_SEARCH_ITERS = 20
CW_KAPPA = 0.0
CW_STEPS = 100
CW_LEARNING_RATE = 0.01
CW_C_RANGE = (1e-3, 1e3)
SPSA_QUERIES = 100
SPSA_DELTA = 0.01
SPSA_STEPS = 10
DISTRIBUTION_SCALE = 0.05
ADAPTIVE_BASELINE_ITERS = 200
ADAPTIVE_IMPROVED_ITERS = 50
AT_PGD_STEPS = 10

# Gates.
ACCURACY_GATE = 0.95
ASR_GATE = 0.50

# Detection thresholds.
TAU_CONF = 0.85
TAU_DISAGREE = 0.15
TAU_ANOMALY = 0.50
CONF_SCALE = 0.12
CONF_CUTOFF = 0.75
TARGET_FPR = 0.10
MIN_CALIBRATION_SAMPLES = 100

# Weight learning.
SIGNAL_NAMES = ["entropy", "disagreement", "anomaly"]
GRID_STEP = 0.01
REFINE_STEP = 0.001
MIN_WEIGHT_SAMPLES = 30

# Tree leaf probabilities are Laplace-smoothed with this pseudo-count.
LAPLACE = 1.0

# Evaluation.
BOOTSTRAP_ITERS = 1000
CONFIDENCE_LEVEL = 0.95

MASTER_SEED = 42
FORMAT_VERSION = 1
OUTPUT_ENV_VAR = "AMDS_OUTPUT_DIR"

# Seed offsets per component; component seed = master seed + offset (+ index).
SEED_OFFSETS = {
    "split": 1,
    "synth": 2,
    "suite": 3,
    "models": 100,
    "attacks": 200,
    "bootstrap": 300,
    "adversarial_training": 400,
    "adaptive": 500,
    "scaling": 600,
}


def component_seed(master_seed: int, component: str, index: int = 0) -> int:
    """
    Derive the seed of one component from the master seed.

    Input:
        master_seed (int): The run's master seed.
        component (str): A key of SEED_OFFSETS.
        index (int): Position of the component within its family (model index, attack index...).

    Returns:
        int: The component seed.
    """
    if component not in SEED_OFFSETS:
        raise ConfigError(f"Unknown seed component '{component}'.")
    return int(master_seed) + SEED_OFFSETS[component] + int(index)


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 7
    dims: int = 20
    per_class: int = 1000
    separation: float = 6.0

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError("dataset.synth.classes must be at least 2.")
        if self.dims < 2:
            raise ConfigError("dataset.synth.dims must be at least 2.")
        if self.per_class < 3:
            raise ConfigError("dataset.synth.per_class must be at least 3.")
        if self.separation < 0:
            raise ConfigError("dataset.synth.separation must be non-negative.")


@dataclass(frozen=True)
class SplitConfig:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1

    def __post_init__(self):
        for name in ("train", "val", "test"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ConfigError(f"dataset.split.{name} must be in (0, 1).")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ConfigError("dataset.split fractions must sum to 1.")


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "synth"
    csv_path: typing.Optional[str] = None
    label_column: str = "label"
    benign_label: int = 0
    ridge_lambda: typing.Optional[float] = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    split: SplitConfig = field(default_factory=SplitConfig)

    def __post_init__(self):
        if self.source not in ("synth", "csv"):
            raise ConfigError("dataset.source must be 'synth' or 'csv'.")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("dataset.csv_path is required when dataset.source is 'csv'.")
        if self.ridge_lambda is not None and self.ridge_lambda <= 0:
            raise ConfigError("dataset.ridge_lambda must be positive.")


@dataclass(frozen=True)
class ModelsConfig:
    paradigms: list = field(default_factory=lambda: list(VALID_PARADIGMS))
    accuracy_gate: float = ACCURACY_GATE
    laplace: float = LAPLACE

    def __post_init__(self):
        unknown = [p for p in self.paradigms if p not in VALID_PARADIGMS]
        if unknown:
            raise ConfigError(f"Unknown model paradigms: {', '.join(unknown)}.")
        if sorted(self.paradigms) != sorted(VALID_PARADIGMS):
            raise ConfigError(
                f"models.paradigms must list the {ENSEMBLE_SIZE} distinct paradigms exactly once."
            )
        if self.laplace < 0:
            raise ConfigError("models.laplace must be non-negative.")


@dataclass(frozen=True)
class AttacksConfig:
    kinds: list = field(default_factory=lambda: GRADIENT_ATTACKS + DISTRIBUTION_ATTACKS)
    epsilon: float = EPSILON
    pgd_steps: int = PGD_STEPS
    pgd_step_size: float = PGD_STEP_SIZE
    cw_binary_search: int = CW_BINARY_SEARCH_ITERS
    cw_kappa: float = CW_KAPPA
    cw_steps: int = CW_STEPS
    cw_learning_rate: float = CW_LEARNING_RATE
    spsa_queries: int = SPSA_QUERIES
    spsa_delta: float = SPSA_DELTA
    spsa_steps: int = SPSA_STEPS
    spsa_step_size: typing.Optional[float] = None
    scale: float = DISTRIBUTION_SCALE
    asr_gate: float = ASR_GATE
    samples_per_attack: int = 500
    cw_samples: int = 250
    source: str = "all"

    def __post_init__(self):
        unknown = [k for k in self.kinds if k not in GRADIENT_ATTACKS + DISTRIBUTION_ATTACKS]
        if unknown:
            raise ConfigError(f"Unknown attack kinds: {', '.join(unknown)}.")
        for category in CATEGORIES:
            if not any(ATTACK_CATEGORIES[k] == category for k in self.kinds):
                raise ConfigError(f"attacks.kinds must include at least one {category} attack.")
        if len(set(self.kinds)) != len(self.kinds):
            raise ConfigError("attacks.kinds must not repeat an attack.")
        if self.epsilon <= 0 or self.scale <= 0:
            raise ConfigError("attacks.epsilon and attacks.scale must be positive.")
        if self.spsa_queries < 2:
            raise ConfigError("attacks.spsa_queries must be at least 2.")
        if self.source not in ("all", "malicious"):
            raise ConfigError("attacks.source must be 'all' or 'malicious'.")


@dataclass(frozen=True)
class WeightsConfig:
    exclude_from_learning: list = field(default_factory=list)
    exclude_below_gate: bool = True
    grid_step: float = GRID_STEP
    refine_step: float = REFINE_STEP

    def __post_init__(self):
        if not 0 < self.grid_step <= 0.5 or not 0 < self.refine_step <= self.grid_step:
            raise ConfigError("weights.grid_step and weights.refine_step are out of range.")


@dataclass(frozen=True)
class ThresholdsConfig:
    target_fpr: float = TARGET_FPR
    tau_conf: float = TAU_CONF
    tau_disagree: float = TAU_DISAGREE
    tau_anomaly: float = TAU_ANOMALY
    conf_scale: float = CONF_SCALE
    conf_cutoff: float = CONF_CUTOFF
    tune_tau_anomaly: bool = False

    def __post_init__(self):
        if not 0 <= self.target_fpr < 1:
            raise ConfigError("thresholds.target_fpr must be in [0, 1).")
        for name in ("tau_conf", "tau_disagree", "tau_anomaly", "conf_scale", "conf_cutoff"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"thresholds.{name} must be in (0, 1).")


@dataclass(frozen=True)
class EvaluationConfig:
    clean_samples: int = 2000
    adversarial_per_attack: int = 500
    attack_source: str = "malicious"
    bootstrap_iters: int = BOOTSTRAP_ITERS
    confidence_level: float = CONFIDENCE_LEVEL
    baselines: bool = True
    ablations: bool = True
    adaptive: bool = True
    scaling: bool = True
    at_seeds: int = 3
    at_steps: int = AT_PGD_STEPS
    single_best: str = "boosted_trees_a"
    adaptive_samples: int = 200
    adaptive_baseline_iters: int = ADAPTIVE_BASELINE_ITERS
    adaptive_improved_iters: int = ADAPTIVE_IMPROVED_ITERS
    scaling_dims: list = field(default_factory=lambda: [77, 190])
    scaling_epsilons: list = field(default_factory=lambda: [EPSILON, 0.01])
    scaling_per_class: int = 200
    scaling_train_systems: bool = False
    roc_points: bool = False

    def __post_init__(self):
        if self.single_best != "auto" and self.single_best not in VALID_PARADIGMS:
            raise ConfigError("evaluation.single_best must be 'auto' or a model paradigm.")
        if not 0 < self.confidence_level < 1:
            raise ConfigError("evaluation.confidence_level must be in (0, 1).")
        if self.attack_source not in ("all", "malicious"):
            raise ConfigError("evaluation.attack_source must be 'all' or 'malicious'.")
        if self.bootstrap_iters < 1 or self.at_seeds < 1:
            raise ConfigError("evaluation.bootstrap_iters and evaluation.at_seeds must be positive.")


@dataclass(frozen=True)
class RunConfig:
    seed: int = MASTER_SEED
    output_dir: str = "runs/default"
    jobs: int = 1
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    models: ModelsConfig = field(default_factory=ModelsConfig)
    attacks: AttacksConfig = field(default_factory=AttacksConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    thresholds: ThresholdsConfig = field(default_factory=ThresholdsConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        if self.jobs == 0 or self.jobs < -1:
            raise ConfigError("jobs must be a positive integer or -1.")

    def seed_for(self, component: str, index: int = 0) -> int:
        """Seed of one component, derived from the master seed."""
        return component_seed(self.seed, component, index)

    def to_dict(self) -> dict:
        """Plain-dictionary view of the configuration."""
        return dataclasses.asdict(self)


def _check_type(value, expected, path):
    """
    Check a scalar or list value against the annotated type of a config field.
    """
    origin = typing.get_origin(expected)
    if origin is typing.Union:
        options = [t for t in typing.get_args(expected) if t is not type(None)]
        if value is None:
            return value
        return _check_type(value, options[0], path)
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{path}' must be a number.")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{path}' must be an integer.")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"'{path}' must be true or false.")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"'{path}' must be a string.")
        return value
    if expected is list:
        if not isinstance(value, list):
            raise ConfigError(f"'{path}' must be a list.")
        return list(value)
    return value


def _build(cls, data, path: str):
    """
    Build a config dataclass from a mapping, rejecting unknown keys.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"'{path or 'config'}' must be a mapping.")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        prefix = f"{path}." if path else ""
        raise ConfigError(f"Unknown configuration keys: {', '.join(prefix + k for k in unknown)}.")
    kwargs = {}
    for name, value in data.items():
        expected = hints[name]
        key_path = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(expected):
            kwargs[name] = _build(expected, value, key_path)
        else:
            kwargs[name] = _check_type(value, expected, key_path)
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    """
    Validate a configuration mapping and build a RunConfig.

    Input:
        data (dict): The parsed configuration.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigError: If a key is unknown or a value has the wrong type or range.
    """
    return _build(RunConfig, data, "")


def load_config(filepath: str = None, overrides: dict = None) -> RunConfig:
    """
    Load a run configuration from a YAML file.

    Flags passed through ``overrides`` take precedence over file values. When no output
    directory override is given, the AMDS_OUTPUT_DIR environment variable replaces the
    file's output_dir.

    Input:
        filepath (str): Path to the YAML file. None loads the defaults.
        overrides (dict): Top-level keys (seed, output_dir, jobs) to override.

    Returns:
        RunConfig: The validated configuration.

    Raises:
        ConfigError: If the file cannot be parsed or fails validation.
        FileNotFoundError: If the file does not exist.
    """
    data = {}
    if filepath is not None:
        if not isinstance(filepath, str):
            raise TypeError("The config file path must be a string.")
        if not os.path.isfile(filepath):
            raise FileNotFoundError(f"Config file '{filepath}' does not exist.")
        with open(filepath, "r", encoding="utf-8") as handle:
            try:
                data = yaml.safe_load(handle) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"Could not parse config file '{filepath}': {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("The config file must contain a mapping at the top level.")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    env_output = os.environ.get(OUTPUT_ENV_VAR)
    if env_output and "output_dir" not in overrides:
        overrides["output_dir"] = env_output
    data = {**data, **overrides}
    return config_from_dict(data)
