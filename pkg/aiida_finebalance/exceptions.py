"""
Exceptions raised by aiida_finebalance.

Every exception carries the exit status used by the ``fbmatch`` command line
tool, so a failure deep in the pipeline surfaces with the right status.
"""
from aiida.common.exceptions import AiidaException


class FineBalanceError(AiidaException):
    """Base class for all errors raised by the matching pipeline."""

    exit_status = 1


class ValidationError(FineBalanceError):
    """Raised when an input file, column schema or configuration is invalid."""

    exit_status = 2


class ConvergenceError(FineBalanceError):
    """Raised when the propensity model fit does not converge."""


class NetworkError(FineBalanceError):
    """Raised for malformed flow networks or costs too large for the solver."""


class InfeasibleError(FineBalanceError):
    """Raised when a match cannot be formed under the requested policy."""

    exit_status = 3
