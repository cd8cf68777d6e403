"""
Exception types raised by the amdslab package.

Every error also derives from the builtin exception that callers would naturally catch
(ValueError, TypeError, ...), so plain ``except ValueError`` handlers keep working.
"""


class AmdsError(Exception):
    """Base class for all amdslab errors."""


class ConfigError(AmdsError, ValueError):
    """Invalid run configuration, unknown key or uncalibrated threshold."""


class DataError(AmdsError, ValueError):
    """Malformed, inconsistent or insufficient input data."""


class SchemaError(DataError):
    """A feature cell or column does not match the expected schema."""


class StratificationError(DataError):
    """A class has too few samples to be present in every split."""


class IllConditionedError(DataError):
    """The benign covariance could not be inverted reliably."""


class NumericalError(AmdsError, ArithmeticError):
    """A detection signal evaluated to a non-finite value."""


class NotDifferentiableError(AmdsError, TypeError):
    """An input gradient was requested from a tree-based model."""


class UndefinedMetricError(AmdsError, ValueError):
    """A metric has no defined value for the given input (e.g. empty sets)."""


class GateError(AmdsError, RuntimeError):
    """A hard failure of the training pipeline (a model could not be fitted)."""


class ManifestError(AmdsError, FileNotFoundError):
    """A trained system or its artefacts are incomplete or missing."""
