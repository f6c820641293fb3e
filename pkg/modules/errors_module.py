"""
Exception types shared by the experiment modules.
"""

from typing import Optional


class GateauxError(Exception):
    """Base class for every error raised by the library."""


class DomainError(GateauxError, ValueError):
    """An argument lies outside the domain of an operation."""


class EvaluationError(GateauxError, ArithmeticError):
    """
    A user-supplied callable produced a non-finite value or raised.

    Attributes:
        index: Sample index, integer k or quadrature node where the failure happened
    """

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message if index is None else f"{message} (index {index})")
        self.index = index


class BudgetError(GateauxError):
    """A tensor-product quadrature would exceed the configured node budget."""


class UsageError(GateauxError):
    """Bad command, parameter or configuration file given to the harness."""
