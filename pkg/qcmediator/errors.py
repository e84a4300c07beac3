"""
qcmediator exception hierarchy.

Every error raised by the library derives from QCMediatorError and may carry
a remediation hint. The CLI maps exception classes to exit codes.
"""

from typing import Optional


class QCMediatorError(Exception):
    """Base class for all qcmediator errors."""

    def __init__(self, message: str, hint: Optional[str] = None):
        super().__init__(message)
        self.hint = hint

    def __str__(self) -> str:
        base = super().__str__()
        if self.hint:
            return f"{base} (hint: {self.hint})"
        return base


class ArgumentError(QCMediatorError, ValueError):
    """An argument is outside the operation's declared domain of inputs."""


class ContractError(QCMediatorError):
    """A value violates a precondition of its type (e.g. non-Hermitian H)."""


class DomainError(QCMediatorError, ValueError):
    """The operation is undefined for this input (e.g. zero-probability outcome)."""


class EvaluationError(QCMediatorError):
    """A user-supplied function failed or produced non-finite values."""


class CapacityError(QCMediatorError):
    """A dense object would exceed the configured size limit."""


class StepSizeError(QCMediatorError):
    """Integrator drift exceeded tolerance for the chosen time step."""


class GridTooSmallError(QCMediatorError):
    """Probability mass leaked past the edge of a configuration grid."""


class WrapContaminationError(QCMediatorError):
    """A periodic-grid evolution brought support too close to the boundary."""


class ConfigValidationError(QCMediatorError, ValueError):
    """A run configuration failed schema validation."""

    def __init__(self, message: str, fields: Optional[list] = None):
        super().__init__(message)
        self.fields = fields or []


EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_GUARD = 3

_GUARD_ERRORS = (CapacityError, StepSizeError, GridTooSmallError, WrapContaminationError)


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract."""
    if isinstance(exc, ConfigValidationError):
        return EXIT_CONFIG
    if isinstance(exc, _GUARD_ERRORS):
        return EXIT_GUARD
    return EXIT_CHECK_FAILED
