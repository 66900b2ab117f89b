"""Exception hierarchy shared by every toolkit module."""


class ToolkitError(Exception):
    """Base class for all toolkit errors.

    Each subclass carries a ``category`` used in CLI messages and a distinct
    process exit code.
    """

    category = "error"
    exit_code = 1


class DimensionError(ToolkitError, ValueError):
    """Tensor shapes do not conform."""

    category = "dimension"
    exit_code = 10


class ConfigurationError(ToolkitError, ValueError):
    """A hyperparameter or config value is invalid."""

    category = "configuration"
    exit_code = 2


class BatchSizeError(ToolkitError, ValueError):
    """Batch too small for the requested operation."""

    category = "batch-size"
    exit_code = 11


class ValidationError(ToolkitError, ValueError):
    """Input data violates a documented precondition."""

    category = "validation"
    exit_code = 12


class PairingError(ToolkitError, ValueError):
    """Source/target pairing is missing or misaligned."""

    category = "pairing"
    exit_code = 13


class UsageError(ToolkitError, RuntimeError):
    """An API was called in the wrong state."""

    category = "usage"
    exit_code = 14


class TrainingError(ToolkitError, RuntimeError):
    """Training diverged."""

    category = "training"
    exit_code = 15


class NonFiniteError(ToolkitError, FloatingPointError):
    """A forward op produced NaN or Inf from finite inputs (debug checks only)."""

    category = "non-finite"
    exit_code = 16


class ArtifactError(ToolkitError, OSError):
    """A checkpoint, dataset file or results file is missing or corrupt."""

    category = "file"
    exit_code = 3


class ConfigParseError(ConfigurationError):
    """A config file line could not be parsed.

    Args:
        message: What went wrong
        line: 1-based line number, when known
        field: Dotted ``section.key`` name, when known
    """

    category = "parse"
    exit_code = 4

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
