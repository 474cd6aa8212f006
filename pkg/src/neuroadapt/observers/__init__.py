from .dynamics import (P_FLOOR, AugmentedObserverState, Hyperparameters, RlsObserverState,
                       augmented_observer_rhs, integrate, network_observer_rhs,
                       output_error_observer_rhs, reduced_observer_rhs, rls_observer_rhs,
                       symmetrize_p)
from .estimators import AugmentedObserver, NetworkObserver, ReducedObserver, RlsObserver
from .saturation import SaturationSpec, saturate, saturate_derivative
from ._kernels import AUGMENTED, OUTPUT_ERROR, REDUCED, RLS

__all__ = [
    "P_FLOOR", "AugmentedObserverState", "Hyperparameters", "RlsObserverState",
    "augmented_observer_rhs", "integrate", "network_observer_rhs", "output_error_observer_rhs",
    "reduced_observer_rhs", "rls_observer_rhs", "symmetrize_p", "AugmentedObserver",
    "NetworkObserver", "ReducedObserver", "RlsObserver", "SaturationSpec", "saturate",
    "saturate_derivative", "AUGMENTED", "OUTPUT_ERROR", "REDUCED", "RLS",
]
