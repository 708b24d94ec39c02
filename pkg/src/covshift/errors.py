"""Exception hierarchy.

The CLI maps :class:`ConfigurationError` to exit code 2 and
:class:`DataError` (which includes :class:`InputError`) to exit code 3.
"""


class CovshiftError(Exception):
    """Base class for all errors raised by the package."""


class DataError(CovshiftError, ValueError):
    """Malformed or inconsistent data (files, arrays, samples)."""


class InputError(DataError):
    """An argument violates an operation's precondition."""


class ParameterError(InputError):
    """A regularization or model parameter is out of range."""


class RangeError(InputError):
    """A requested value lies outside the range of a monotone function."""


class ConfigurationError(CovshiftError, ValueError):
    """An experiment, problem, or schedule is configured inconsistently."""
