"""Covariate-shift adaptation with spectral regularization in kernel spaces."""
from covshift._backend import NAME as BACKEND
from covshift.errors import (
    ConfigurationError,
    CovshiftError,
    DataError,
    InputError,
    ParameterError,
    RangeError,
)
from covshift.filters import FilterSpec, parse_filter
from covshift.kernels import KernelSpec, SampleSet, parse_kernel
from covshift.representer import RepresenterFunction

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "CovshiftError",
    "DataError",
    "FilterSpec",
    "InputError",
    "KernelSpec",
    "ParameterError",
    "RangeError",
    "RepresenterFunction",
    "SampleSet",
    "parse_filter",
    "parse_kernel",
]
