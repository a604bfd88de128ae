"""Error taxonomy shared by the library and the CLI.

The CLI maps these onto exit codes: config 2, data 3, numeric 4.
"""


class SagcnError(Exception):
    """Base class for all package errors."""


class ConfigError(SagcnError, ValueError):
    """Invalid or missing run configuration."""


class DataError(SagcnError, ValueError):
    """Malformed input data or an operation that cannot be satisfied by it."""


class NumericError(SagcnError, ArithmeticError):
    """Non-finite values encountered during computation."""
