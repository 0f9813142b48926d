"""Exception hierarchy shared by every module."""

from __future__ import annotations


class FedLabError(Exception):
    """Base class for all library errors."""


class SingularMatrix(FedLabError, ArithmeticError):
    pass


class Unsupported(FedLabError, ValueError):
    pass


class AssumptionViolation(FedLabError):
    """A declared analytic constant is contradicted by a sampled instance."""

    def __init__(self, message: str, instance: dict | None = None):
        super().__init__(message)
        self.instance = instance or {}


class TooLarge(FedLabError, ValueError):
    pass


class InconsistentParams(FedLabError, ValueError):
    pass


class NotApplicable(FedLabError, ValueError):
    pass


class InvalidCondition(FedLabError, ValueError):
    pass


class DivergenceDetected(FedLabError, ArithmeticError):
    pass


class ComplexRoots(FedLabError, ValueError):
    pass


class DomainError(FedLabError, ValueError):
    pass


class PhiTooSmall(FedLabError, ValueError):
    pass


class ZeroMatrix(FedLabError, ValueError):
    pass


class EmptySelection(FedLabError, ValueError):
    pass


class ConfigError(FedLabError, ValueError):
    pass
