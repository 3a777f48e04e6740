"""Exception hierarchy for the linearization engine.

Every failure raised by the package derives from ``LinearizerError`` so the
CLI can translate it into the documented exit codes in one place.
"""
from dataclasses import dataclass
from typing import Any, Optional


class LinearizerError(Exception):
    """Base class for all engine errors."""
    exit_code = 1


@dataclass(frozen=True)
class ParseDiagnostic:
    """Location and hint for a rejected expression."""
    offset: int
    message: str
    expected: Optional[str] = None

    def render(self, text: str) -> str:
        caret = " " * self.offset + "^"
        hint = f" (expected {self.expected})" if self.expected else ""
        return f"{self.message}{hint}\n  {text}\n  {caret}"


class ParseError(LinearizerError):
    exit_code = 2

    def __init__(self, diagnostic: ParseDiagnostic, text: str = ""):
        self.diagnostic = diagnostic
        self.text = text
        super().__init__(f"{diagnostic.message} at offset {diagnostic.offset}")


class ReservedNameError(ParseError):
    pass


class UnknownParameterError(LinearizerError):
    exit_code = 2


class UsageError(LinearizerError):
    exit_code = 2


class MalformedExpressionError(LinearizerError):
    exit_code = 2


class SingularPointError(LinearizerError):
    """A denominator vanished at the evaluation point."""


class DomainError(LinearizerError):
    """A function was evaluated outside its real domain (ln of a non-positive value, ...)."""


class InconclusiveSamplingError(LinearizerError):
    exit_code = 6

    def __init__(self, message: str, condition: Optional[str] = None):
        self.condition = condition
        prefix = f"[{condition}] " if condition else ""
        super().__init__(f"{prefix}{message}")

    def with_condition(self, condition: str) -> "InconclusiveSamplingError":
        return InconclusiveSamplingError(str(self), condition=condition)


class WuenschmannZeroError(LinearizerError):
    exit_code = 3

    def __init__(self, message: str = "I3 vanishes identically"):
        super().__init__(message)


class DegenerateTransformError(LinearizerError):
    exit_code = 5


class InvalidTargetError(LinearizerError):
    exit_code = 2


class RejectedAnsatzError(LinearizerError):
    exit_code = 6

    def __init__(self, label: str, witness: Any = None, value: Any = None):
        self.label = label
        self.witness = witness
        self.value = value
        super().__init__(f"auxiliary functions rejected by equation {label}")


class ClassificationMismatchError(LinearizerError):
    exit_code = 4


class PathError(LinearizerError):
    exit_code = 6


class StepSizeUnderflowError(LinearizerError):
    exit_code = 6
