"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NumericError(ArithmeticError):
    """A computed value is NaN or infinite where finiteness is required."""


class FormatError(ValueError):
    """A file (checkpoint or image) does not match its declared format."""


class ConfigError(ValueError):
    """A config file or option value cannot be interpreted."""
