"""Exception types shared across the package."""


class NeuroAdaptError(Exception):
    """Base class for all package errors."""


class InvalidKineticsError(NeuroAdaptError, ValueError):
    pass


class DimensionError(NeuroAdaptError, ValueError):
    pass


class ConfigError(NeuroAdaptError, ValueError):
    """Raised for malformed or unresolvable scenario/preset configuration."""


class NumericalError(NeuroAdaptError, ArithmeticError):
    """Base for failures during numerical integration or linear algebra."""


class IntegrationError(NumericalError):
    """A non-finite value appeared while integrating an ODE.

    ``component`` is the flat index of the first offending state entry and
    ``step`` the integration step at which it was detected (when known).
    """

    def __init__(self, message, component=None, step=None):
        super().__init__(message)
        self.component = component
        self.step = step


class ConditioningError(NumericalError):
    """The covariance-like matrix P lost positive definiteness."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NotPersistentlyExcitingError(NumericalError):
    """Raised when an information matrix is singular or delta <= 0."""

    def __init__(self, message, min_eig=None):
        super().__init__(message)
        self.min_eig = min_eig


class InfeasibleRateError(NeuroAdaptError, ValueError):
    pass
