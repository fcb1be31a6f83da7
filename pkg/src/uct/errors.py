"""Exception types shared across the toolkit."""


class UctError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(UctError, ValueError):
    """A caller-supplied value violates a precondition."""


class ConfigError(UctError, ValueError):
    """A configuration value is inconsistent or out of range."""


class FieldFormatError(UctError):
    """A field file is malformed. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None
                         else f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateSignalError(UctError):
    """A signal has no usable content (all-zero / constant)."""


class NumericalDivergenceError(UctError):
    """Time stepping produced non-finite values. ``step`` is the failing step."""

    def __init__(self, step):
        super().__init__(f"non-finite field values at time step {step}")
        self.step = step


class NonConvergentRayError(UctError):
    """Ray tracing failed to reach the source within the step budget."""
