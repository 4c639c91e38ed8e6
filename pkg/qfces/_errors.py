"""
The two roots of the error taxonomy.

Everything the pipeline raises on purpose derives from one of these, so that
the command line can map a failure onto an exit code without knowing which
module raised it.
"""

from effect import FirstError
from effect.fold import FoldError


class ValidationError(Exception):
    """Input, configuration or artifact problems. Exit code 1."""


class BackendError(Exception):
    """A completion backend failed or produced unusable output. Exit code 2."""


class StatisticsError(ValidationError, ValueError):
    """A statistic is undefined for the input it was given."""


def unwrap(error):
    """
    Strip the wrappers that :func:`effect.parallel` and
    :func:`effect.fold.sequence` put around exceptions and return the
    exception that was originally raised.
    """
    while True:
        if isinstance(error, FirstError):
            error = error.exception
        elif isinstance(error, FoldError):
            error = error.wrapped_exception
        else:
            return error
