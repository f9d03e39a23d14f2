"""
Exception hierarchy for flowpriors.

Every error carries the exit code the command-line front end reports for it,
so library failures map onto the CLI taxonomy without translation tables:
1 for validation problems, 2 for I/O and container problems, 3 for numeric ones.
"""

from typing import Optional


class FlowPriorsError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationError(FlowPriorsError):
    """An input violates a documented invariant."""

    exit_code = 1


class UsageError(ValidationError):
    """Unknown command, unknown flag, or malformed flag value."""


class ClipIOError(FlowPriorsError):
    """Reading from or writing to a byte stream failed."""

    exit_code = 2

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FormatError(ClipIOError):
    """The stream is not an HFSF container this reader understands."""


class CorruptionError(ClipIOError):
    """A chunk is truncated or references data that does not exist."""

    def __init__(self, message: str, tag: Optional[str] = None, offset: Optional[int] = None):
        if tag is not None:
            message = f"chunk {tag}: {message}"
        super().__init__(message, offset)
        self.tag = tag


class NumericError(FlowPriorsError):
    """A numerical routine cannot produce a meaningful result."""

    exit_code = 3


class DomainError(NumericError):
    """An argument lies outside the domain of the operation."""


class DegenerateMaskError(NumericError):
    """A mask is all foreground or all background where a boundary is required."""


class InsufficientSupportError(NumericError):
    """Too few ground candidates to fit a support plane."""


class DivergenceError(NumericError):
    """An optimization step produced a non-finite gradient."""

    def __init__(self, constraint: str, step: int):
        super().__init__(f"non-finite gradient from {constraint} at step {step}")
        self.constraint = constraint
        self.step = step


class InconclusiveSampleError(NumericError):
    """Finite differences kept crossing a branch boundary."""
