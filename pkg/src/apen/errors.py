"""Error types shared across the package.

The CLI maps these onto exit codes: InvalidArgument -> 2,
NumericFailure -> 3, ParseError -> 4.
"""


class ApenError(Exception):
    pass


class InvalidArgument(ApenError):
    """Bad shapes, out-of-range values, or malformed configuration."""


class InvalidConfiguration(InvalidArgument):
    """A structurally valid but semantically inconsistent configuration."""


class NumericFailure(ApenError):
    """Non-finite values or singular systems encountered mid-computation."""


class ParseError(ApenError):
    """Malformed on-disk data; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
