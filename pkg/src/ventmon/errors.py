"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so keep the split between
configuration problems (bad parameters, out-of-range thresholds) and data
problems (malformed or degenerate input files).
"""

from __future__ import annotations


class VentmonError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VentmonError, ValueError):
    """A parameter or threshold is outside its permitted range."""


class DataError(VentmonError, ValueError):
    """An input trace or file is malformed or unusable."""


class EmptyTraceError(DataError):
    """The input contains no samples."""


class NonMonotonicTimestampsError(DataError):
    """Trace timestamps are not strictly increasing."""


class NonFiniteSampleError(DataError):
    """A pressure value is NaN or infinite."""
