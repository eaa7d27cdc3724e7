"""Exception hierarchy shared by all modules."""


class PwitLabError(Exception):
    """Base class for all toolkit errors."""


class DomainError(PwitLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(PwitLabError, ArithmeticError):
    """Quadrature, bracketing or inversion failed to reach tolerance."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration limit."""


class ResourceError(PwitLabError, RuntimeError):
    """A configured size limit (sample count, cache size) would be exceeded."""


class DegenerateEnvironmentError(PwitLabError, ValueError):
    """A vertex has zero total conductance, so no transition is defined."""
