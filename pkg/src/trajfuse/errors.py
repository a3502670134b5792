"""Exception hierarchy shared by all modules.

Two families matter for the CLI exit code: ValidationError (bad inputs,
exit 1) and NumericalError (a computation failed at runtime, exit 2).
"""


class TrajFuseError(Exception):
    """Base class for all package errors."""


class ValidationError(TrajFuseError):
    """Invalid argument, file content, or configuration."""


class ParseError(ValidationError):
    """Malformed file content; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class InsufficientDataError(ValidationError):
    """Not enough measurements or correspondences to proceed."""


class UnanchoredGraphError(ValidationError):
    """A connected component has no active absolute edge (gauge freedom)."""


class NumericalError(TrajFuseError):
    """A numerical procedure failed (lost PSD, singular system, ...)."""


class RegistrationError(NumericalError):
    """No acceptable rigid model found by robust registration."""


class OptimizationError(NumericalError):
    """Optimizer could not make progress; carries the last iterate."""

    def __init__(self, message, last_poses=None):
        self.last_poses = last_poses
        super().__init__(message)
