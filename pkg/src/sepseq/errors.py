"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code: UsageError -> 1, TransportError -> 2,
DataError -> 3.
"""
from __future__ import annotations


class SepseqError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class UsageError(SepseqError):
    """Caller violated a precondition (bad arguments, bad config)."""

    exit_code = 1


class TransportError(SepseqError):
    """Endpoint unreachable or retries exhausted."""

    exit_code = 2


class DataError(SepseqError):
    """Corpus or record violates the expected schema."""

    exit_code = 3


class ParseError(DataError):
    """Formatted text could not be parsed back into a sequence.

    Carries the byte offset of the first offending character.
    """

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExecutionFailed(SepseqError):
    """A generated program exited nonzero, timed out, or hit a limit."""

    exit_code = 1
