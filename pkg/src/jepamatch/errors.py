"""Exception types shared across the package."""


class JepamatchError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(JepamatchError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(JepamatchError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ContractError(JepamatchError, ValueError):
    """A documented API precondition was violated by the caller."""


class ConfigError(JepamatchError, ValueError):
    """A configuration value is invalid or inconsistent."""


class FormatError(JepamatchError, ValueError):
    """A serialized artifact (dataset, checkpoint, config) is malformed."""


class NumericError(JepamatchError, ArithmeticError):
    """Non-finite values were fed to a numeric routine."""
