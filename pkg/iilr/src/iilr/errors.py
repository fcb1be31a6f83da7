"""Exception hierarchy for the iilr package."""


class IilrError(Exception):
    """Base class for all domain errors raised by iilr."""


class ConfigError(IilrError, ValueError):
    """Invalid configuration value or combination."""


class ShapeError(IilrError, ValueError):
    """Tensor or image shape incompatible with the requested operation."""


class FieldFormatError(IilrError):
    """Malformed field file."""


class DatasetError(IilrError):
    """Dataset directory missing, empty, or structurally wrong."""
