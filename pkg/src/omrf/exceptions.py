"""Exception hierarchy.

The CLI maps these onto exit codes: validation 2, capacity 3, numerical 4.
"""


class OMRFError(Exception):
    """Base class for all package errors."""


class ValidationError(OMRFError, ValueError):
    """Input data or configuration does not conform to the model."""


class ConfigError(ValidationError):
    """Invalid configuration value (non-positive prior sd, unknown key...)."""


class CapacityError(OMRFError):
    """State space too large for exact enumeration."""


class NumericalError(OMRFError, ArithmeticError):
    """A factorization or solve failed (singular / indefinite matrix)."""
