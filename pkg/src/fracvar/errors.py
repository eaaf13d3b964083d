"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FracvarError(Exception):
    """Base class of every error raised by :mod:`fracvar`."""


class ExpressionError(FracvarError):
    pass


class ParseError(ExpressionError):
    """Raised for malformed expression text.

    The zero-based character offset of the offending token is kept in
    :attr:`position`.
    """

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, position: int) -> None:
        super().__init__(f"unknown identifier {name!r}", position)
        self.name = name


class UnboundVariableError(ExpressionError):
    def __init__(self, name: str) -> None:
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


class DomainError(ExpressionError):
    """Evaluation left the domain of an operation (``ln(0)``, ``0^-1``, ...).

    When evaluating on a grid, :attr:`index` is the first offending node.
    """

    def __init__(self, message: str, index: int | None = None) -> None:
        where = "" if index is None else f" at node {index}"
        super().__init__(message + where)
        self.index = index


class GammaPoleError(FracvarError, ValueError):
    pass


class FixtureError(FracvarError, KeyError):
    pass


class UnsupportedProblemError(FracvarError):
    pass


class SingularConstraintError(FracvarError):
    def __init__(self, message: str, index: int) -> None:
        super().__init__(f"{message} at node {index}")
        self.index = index


class DimensionMismatchError(FracvarError, ValueError):
    pass


class ConvergenceError(FracvarError):
    """The boundary value solver did not converge.

    The last iterate is attached as :attr:`solution`.
    """

    def __init__(self, message: str, solution=None) -> None:
        super().__init__(message)
        self.solution = solution


class BasePointError(FracvarError, ValueError):
    """The moment expansion is stated at the base point 0 only."""


class ConfigError(FracvarError, ValueError):
    """A run configuration is malformed or out of range."""
