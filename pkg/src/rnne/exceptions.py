"""Exception types raised across the package."""


class RnneError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(RnneError, ValueError):
    """An argument violates an operation's precondition."""


class ParseError(ValidationError):
    """A text input could not be parsed; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CapacityError(RnneError):
    """A snapshot needs more node slots than the configured capacity."""


class SequencingError(RnneError):
    """Snapshot time indices are not consecutive."""


class CorruptionError(RnneError, ArithmeticError):
    """A numeric quantity that must be finite became NaN or infinite."""


class TrainingError(RnneError, RuntimeError):
    """Training could not proceed (divergence, no eligible nodes, ...)."""


class GenerationError(RnneError, RuntimeError):
    """Synthetic series generation drove the graph into an invalid state."""


class ConfigError(RnneError, ValueError):
    """A run configuration file or flag value is invalid."""
