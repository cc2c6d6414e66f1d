"""Exception types shared across the package."""

from __future__ import annotations


class GraphFormatError(ValueError):
    """Malformed edge-list or profile input.

    Carries the 1-based line number of the offending input line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RuntimeError):
    """A numerical routine produced non-finite values or failed to converge."""


class InternalInconsistencyError(RuntimeError):
    """Two independent computation routes disagreed.

    Raised when a cross-check fails (e.g. a block solve hits a singular
    matrix that the structural classification says cannot be singular).
    Indicates a bug in this package, not bad user input.
    """
