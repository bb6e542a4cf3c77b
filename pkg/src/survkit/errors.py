"""Exception hierarchy shared by every analysis module.

The CLI maps each class to a distinct exit code, so library code raises
the most specific class that applies.
"""


class SurvkitError(Exception):
    """Base class for all errors raised by survkit."""

    exit_code = 1


class UsageError(SurvkitError, ValueError):
    """Bad arguments: unknown variable, wrong variable kind, invalid option."""

    exit_code = 1


class DataError(SurvkitError, ValueError):
    """Input data violates a precondition (bad row, empty cohort, no events)."""

    exit_code = 2


class ModelError(SurvkitError):
    """The model cannot be fitted as specified (e.g. rank-deficient design)."""

    exit_code = 3


class ConvergenceError(ModelError):
    """An iterative fit failed to converge or diverged."""

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
