"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2, numeric failures exit 3.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad schema mapping, unknown variant, bad grid."""


class DataError(ValueError):
    """Invalid data: malformed files, duplicate keys, degenerate labels."""


class NumericError(ArithmeticError):
    """Numeric failure: non-finite values where finite ones are required."""
