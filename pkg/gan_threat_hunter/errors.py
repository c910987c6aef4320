"""
Exception hierarchy for the threat-hunting engine.

InputError subclasses describe bad inputs (exit code 2 at the CLI);
everything else under ThreatHunterError is a runtime failure (exit code 1).
"""


class ThreatHunterError(Exception):
    """Base class for every error raised by this package."""


class InputError(ThreatHunterError):
    """Invalid user input: files, configs, shapes or labels."""


class DimensionError(InputError, ValueError):
    """Operand shapes do not fit the operation."""


class LabelError(InputError, ValueError):
    """Label outside the codec's range or not a known class name."""


class ColumnError(InputError, KeyError):
    """Missing, unknown or unusable column in a table."""

    def __str__(self) -> str:
        # KeyError quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class RaggedRowError(InputError, ValueError):
    """A CSV row has a different field count than the header."""

    def __init__(self, row: int, detail: str = ""):
        self.row = row
        message = f"ragged row at line {row}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class EmptyDatasetError(InputError, ValueError):
    """An operation needs at least one row."""


class ConfigError(InputError, ValueError):
    """Malformed or unknown configuration value."""


class CheckpointError(InputError):
    """Checkpoint is unreadable, of another format version, or mismatched."""


class BundleError(InputError):
    """Dataset bundle directory is missing pieces or has a foreign format."""


class NonFiniteError(ThreatHunterError, FloatingPointError):
    """NaN or Inf reached an op boundary."""


class TapeError(ThreatHunterError, RuntimeError):
    """Misuse of a gradient tape (reuse, foreign loss, non-scalar loss)."""


class MissingGradientError(ThreatHunterError, RuntimeError):
    """An optimizer step found a parameter without a gradient."""


class GradcheckError(ThreatHunterError, AssertionError):
    """Analytic and numerical gradients disagree."""
