"""Exception types shared across the package.

The CLI maps these onto process exit codes (see ``dlsc.cli``).
"""


class DLSCError(Exception):
    """Base class for all package errors."""


class DimensionError(DLSCError, ValueError):
    """Shapes are incompatible for the requested operation."""


class DomainError(DLSCError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class UsageError(DLSCError, RuntimeError):
    """An API was called in a state where the call is not valid."""


class ConfigError(DLSCError, ValueError):
    """Invalid or inconsistent configuration."""


class FormatError(DLSCError, ValueError):
    """A file does not match its expected on-disk format."""


class ParseError(FormatError):
    """A text input could not be parsed."""


class DivergenceError(DLSCError, FloatingPointError):
    """Training produced a non-finite value."""

    def __init__(self, term: str, step: int | None = None):
        self.term = term
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite value in loss term '{term}'{where}")
