"""Exception types shared across the package.

Validation problems (bad inputs, malformed files, violated preconditions)
and numerical problems (divergence, failed convergence, unstable matrices)
are kept distinct so the CLI can map them to different exit codes.
"""


class TokenwalkError(Exception):
    """Base class for all package errors."""


class ValidationError(TokenwalkError):
    """Input or precondition violation."""


class ParseError(ValidationError):
    """Malformed text input; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NumericalError(TokenwalkError):
    """Numerical failure: divergence, non-convergence, instability."""
