"""Exception taxonomy shared across the package.

Exit codes used by the CLI: configuration errors exit 2, truncation errors
exit 3, internal consistency failures exit 4.
"""


class BlppError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(BlppError):
    """Invalid grid, window, or parameter configuration."""

    exit_code = 2


class TruncationError(BlppError):
    """A supremum over [t, inf) could not be trusted at the finite horizon."""

    exit_code = 3


class InternalConsistencyError(BlppError):
    """An invariant that should hold by construction was violated."""

    exit_code = 4
