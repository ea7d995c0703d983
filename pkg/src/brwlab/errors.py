"""Exception types shared across the package."""


class BrwLabError(Exception):
    """Base class for all package-specific errors."""


class QuadratureFailure(BrwLabError):
    """Numerical integration could not reach the requested tolerance."""


class DomainError(BrwLabError):
    """Argument lies outside the domain where the quantity is finite."""


class RangeError(BrwLabError):
    """Requested value is outside the attainable range of the map."""


class ConvergenceFailure(BrwLabError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CapacityExceeded(BrwLabError):
    """Unpruned simulation hit the configured hard memory bound."""


class RestartBudgetExhausted(BrwLabError):
    """Survival conditioning used up all allowed restarts."""


class EmptyGeneration(BrwLabError):
    """Queried generation holds no particles."""


class InvalidNode(BrwLabError):
    """Node index does not refer to a particle in the arena."""


class InsufficientHits(BrwLabError):
    """Too few target hits to form the requested statistic."""


class InsufficientEvents(BrwLabError):
    """Too few rare events observed; increase replications."""


class NoAcceptedSamples(BrwLabError):
    """Conditioning event never occurred in the sample budget."""


class ConfigError(BrwLabError):
    """Configuration file or override is invalid."""
