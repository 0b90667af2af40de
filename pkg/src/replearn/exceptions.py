"""Exceptions for replearn."""


# ===========================================
# Base Exception
# ===========================================
class ReplearnBaseException(Exception):
    """Base exception for replearn errors."""


# ===========================================
# Model Exceptions
# ===========================================
class StructuralError(ReplearnBaseException):
    """Exception raised when matrix shapes of a model are inconsistent."""


class InvalidModelError(ReplearnBaseException):
    """Exception raised when a factorization does not induce a stochastic kernel."""


class ReplearnValidationError(ReplearnBaseException):
    """Exception raised for invalid policies, distributions, datasets or classes."""


# ===========================================
# Algorithm Exceptions
# ===========================================
class PlannerNonConvergenceError(ReplearnBaseException):
    """Exception raised when value iteration exceeds its iteration cap."""


class ConfigurationError(ReplearnBaseException):
    """Exception raised for algorithm configurations that cannot be run."""


# ===========================================
# Harness Exceptions
# ===========================================
class GenerationError(ReplearnBaseException):
    """Exception raised when an environment or model class cannot be generated."""


class ExperimentIOError(ReplearnBaseException):
    """Exception raised when experiment inputs or outputs cannot be read/written."""

    def __init__(self, message: str, path: str | None = None) -> None:
        super().__init__(message if path is None else f"{message} [{path}]")
        self.message = message
        self.path = path

    def __reduce__(self) -> tuple[type, tuple[str, str | None]]:
        return self.__class__, (self.message, self.path)
