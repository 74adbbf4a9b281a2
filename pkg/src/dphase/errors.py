"""Exception types shared across the package."""


class DphaseError(Exception):
    """Base class for all package errors."""


class InvalidArgument(DphaseError, ValueError):
    """An input violates a documented precondition."""


class NumericDomainError(DphaseError, ArithmeticError):
    """A computation left the representable/finite range."""


class BracketFailure(DphaseError, RuntimeError):
    """No sign-certified box could be found for the constraint pair."""


class ProjectionFailure(DphaseError, RuntimeError):
    """Newton and box bisection both failed to locate the constraint pair."""


class SolverSetupError(DphaseError, RuntimeError):
    """The configured problem lacks the geometry a solver relies on."""


class ConfigError(DphaseError, ValueError):
    """A run configuration could not be parsed or validated."""
