"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class TrajkitError(Exception):
    """Base class for toolkit errors."""


class ValidationError(TrajkitError, ValueError):
    """An input violates a documented invariant.

    ``field`` names the offending value and ``constraint`` the rule it broke,
    when known.
    """

    def __init__(self, message: str, field: str | None = None, constraint: str | None = None):
        super().__init__(message)
        self.field = field
        self.constraint = constraint


class PoseValidationError(ValidationError):
    """A rotation or translation is not a valid rigid pose."""


class LengthMismatchError(ValidationError):
    """Two frame-aligned sequences have different lengths."""

    def __init__(self, len_a: int, len_b: int):
        super().__init__(f"sequence lengths differ: {len_a} vs {len_b}", "frame_count", "equal lengths")
        self.len_a = len_a
        self.len_b = len_b


class DegenerateTangentError(ValidationError):
    """A spline tangent is too short to define a heading."""


class ParseError(TrajkitError, ValueError):
    """A document is not syntactically well formed."""

    def __init__(self, message: str, line: int, offset: int):
        super().__init__(f"{message} (line {line}, offset {offset})")
        self.line = line
        self.offset = offset


class CompositionError(TrajkitError, RuntimeError):
    """Entities could not be placed without collisions."""

    def __init__(self, message: str, pair: tuple[str, str] | None = None):
        super().__init__(message)
        self.pair = pair


class NumericError(TrajkitError, ArithmeticError):
    """A computation produced non-finite values."""


class SamplerError(NumericError):
    """The denoiser returned non-finite values at a sampling step."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} at step {step}")
        self.step = step
