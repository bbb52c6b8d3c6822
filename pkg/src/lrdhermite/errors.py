"""Exception types raised across the package."""


class LRDError(Exception):
    """Base class for all package errors."""


class DomainError(LRDError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(DomainError):
    """Evaluation requested at a point where the function blows up."""


class UnsupportedDimensionError(DomainError):
    pass


class OrderTooLargeError(DomainError):
    pass


class LongRangeViolationError(DomainError):
    """The long-range condition 0 < alpha*m < n does not hold."""


class DivergenceError(DomainError):
    """The requested integral is not finite for these exponents."""


class QuadratureError(LRDError):
    """Quadrature did not reach its tolerance.

    ``residual`` carries the last error estimate.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class BudgetError(QuadratureError):
    """Quadrature would exceed its node budget."""


class IntegrabilityError(LRDError):
    pass


class RankUndetectedError(LRDError):
    pass


class RankMismatchError(LRDError):
    pass


class ModelError(LRDError):
    pass


class NonPSDCovarianceError(LRDError):
    pass


class GridSizeError(LRDError):
    pass


class SpectralDiscretizationError(LRDError):
    pass


class LagError(LRDError, ValueError):
    pass


class CoverageError(LRDError, ValueError):
    """A field sample does not cover the points a functional needs."""


class InputError(LRDError, ValueError):
    pass


class ConfigError(LRDError):
    """Configuration could not be parsed."""


class ValidationError(LRDError):
    """Configuration parsed but violates module preconditions."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)
