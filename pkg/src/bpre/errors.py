"""Exception types raised across the package."""


class BpreError(Exception):
    """Base class for all package errors."""


class InvalidParameter(BpreError, ValueError):
    """A law, model or argument is outside its admissible range."""


class PopulationOverflow(BpreError, OverflowError):
    """A generation size exceeded the representable count ceiling."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class BudgetExceeded(BpreError, RuntimeError):
    """A simulation ran out of its step or rejection budget.

    ``partial`` carries whatever was computed before the budget ran out
    (an acceptance estimate, a partial manifest, ...).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InsufficientHorizon(BpreError, ValueError):
    """A truncated series has a tail bound too large relative to its value."""


class WrongFamily(BpreError, ValueError):
    """An operation needs a specific offspring family and got another."""


class DegenerateSample(BpreError, ValueError):
    """All weights vanish, or a ratio denominator is indistinguishable from 0."""


class ExcessCensoring(BpreError, RuntimeError):
    """Too many observations were censored by the finite horizon."""


class InsufficientK(BpreError, RuntimeError):
    """A truncated theta series has not converged at the requested K."""
