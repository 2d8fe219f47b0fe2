"""Exception types shared across the package.

Invalid numeric arguments raise plain ``ValueError`` and unknown ids raise
``KeyError``; the classes below cover failures that map onto CLI exit codes.
"""


class ConfigError(Exception):
    """Configuration is inconsistent or references missing resources (exit code 2)."""


class DataError(Exception):
    """Input data violates the documented interchange schema (exit code 3)."""


class NumericalError(Exception):
    """Numerical failure such as a non-finite training loss (exit code 4)."""
