"""Exception types shared across the package."""


class LsiLabError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(LsiLabError):
    pass


class NonPositiveDefiniteCovariance(LsiLabError):
    pass


class BadWeights(LsiLabError):
    pass


class ComponentBudgetExceeded(LsiLabError):
    pass


class BudgetExceeded(LsiLabError):
    pass


class DomainError(LsiLabError):
    pass


class SingularFisherMatrix(LsiLabError):
    pass


class CountMismatch(LsiLabError):
    pass


class TailAssumptionViolated(LsiLabError):
    pass


class SigmaNonPositive(LsiLabError):
    pass


class GridTooCoarse(LsiLabError):
    pass


class DegenerateDeficit(LsiLabError):
    pass


class ConfigError(LsiLabError):
    pass
