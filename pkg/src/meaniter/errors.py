"""Exception hierarchy shared by all meaniter modules."""


class MeanIterError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MeanIterError, ValueError):
    """An argument lies outside the domain of an operation or a mean."""


class DivisionByZero(DomainError, ZeroDivisionError):
    pass


class AxiomError(MeanIterError, ValueError):
    """A user-supplied generator, deviation or mean violates a required axiom.

    The message names the violated property (monotonicity, sign condition,
    mean property, ...).
    """


class BracketError(AxiomError):
    """A root finder was handed a bracket without a sign change."""


class ResiduumError(MeanIterError, ArithmeticError):
    """The residuum could not be computed or its estimators disagree."""


class ExtrapolationError(ResiduumError):
    """The extrapolation table failed to converge (non-smooth mean)."""


class ConvergenceError(MeanIterError, ArithmeticError):
    """A Gauss iteration did not reach the diagonal in the allowed steps."""


class InsufficientRatiosError(ConvergenceError):
    """Too few variance ratios above the precision floor to estimate a limit."""


class ConfigError(MeanIterError, ValueError):
    """Malformed experiment configuration or wire-format document."""
