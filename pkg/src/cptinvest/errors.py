"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CptInvestError(Exception):
    """Base class for all package errors."""


class ConfigError(CptInvestError):
    """A configuration file or entry could not be parsed.

    ``key`` and ``line`` locate the offending entry when known.
    """

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DomainError(CptInvestError, ValueError):
    """A time or argument lies outside the admissible domain."""


class VariantError(CptInvestError):
    """An operation was requested that the model variant does not support."""


class ModelValidationError(CptInvestError):
    """The market model violates a structural assumption."""


class PreferenceError(CptInvestError):
    """Preferences are malformed or violate the well-posedness condition."""


class WellPosednessError(PreferenceError):
    """The integrability exponent product does not exceed one."""


class ControlError(CptInvestError):
    """A relaxed control left its admissible set at some step."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)


class InputError(CptInvestError, ValueError):
    """Malformed numerical input (negative samples, bad shapes, ...)."""


class NumericalError(CptInvestError, ArithmeticError):
    """A simulated or evaluated quantity became non-finite."""


class UnsupportedError(CptInvestError):
    """A documented refusal: the operation is not defined for this input."""


class PreconditionError(CptInvestError, ValueError):
    """An operation's documented precondition does not hold."""
