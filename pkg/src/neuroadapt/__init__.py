"""Online and offline parameter estimation for conductance-based neuron models."""
from .errors import (ConditioningError, ConfigError, DimensionError, InfeasibleRateError,
                     IntegrationError, InvalidKineticsError, NeuroAdaptError,
                     NotPersistentlyExcitingError, NumericalError)

__version__ = "0.1.0"
