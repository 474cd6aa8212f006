"""Gating kinetics: sigmoid activations, bell-shaped time constants, gate rates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidKineticsError


@dataclass(frozen=True)
class GatingKinetics:
    """Kinetics of one intrinsic gating variable.

    ``rho``/``kappa`` shape the steady-state sigmoid (mV); ``tau_min``,
    ``tau_max`` (ms), ``zeta`` and ``chi`` (mV) shape the bell-shaped time
    constant. A negative ``kappa`` gives an inactivation gate.
    """

    rho: float
    kappa: float
    tau_min: float
    tau_max: float
    zeta: float
    chi: float

    def __post_init__(self):
        if self.kappa == 0:
            raise InvalidKineticsError("kappa must be nonzero")
        if not self.tau_min > 0:
            raise InvalidKineticsError(f"tau_min must be > 0, got {self.tau_min}")
        if self.tau_max < self.tau_min:
            raise InvalidKineticsError(
                f"tau_max ({self.tau_max}) must be >= tau_min ({self.tau_min})")
        if self.chi == 0:
            raise InvalidKineticsError("chi must be nonzero")

    def as_tuple(self):
        return (self.rho, self.kappa, self.tau_min, self.tau_max, self.zeta, self.chi)


@dataclass(frozen=True)
class SynapticKinetics:
    rho: float
    kappa: float
    a: float
    b: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidKineticsError(f"synaptic kappa must be > 0, got {self.kappa}")
        if not (self.a > 0 and self.b > 0):
            raise InvalidKineticsError("synaptic rate constants a, b must be > 0")

    def tau(self, v_pre):
        """Synaptic time constant; lies in [1/(a+b), 1/b]."""
        return 1.0 / (self.a * sigmoid_eval(v_pre, self.rho, self.kappa) + self.b)


def sigmoid_eval(v, rho, kappa):
    """Steady-state activation ``1 / (1 + exp(-(v - rho) / kappa))``."""
    if np.any(np.asarray(kappa) == 0):
        raise InvalidKineticsError("kappa must be nonzero")
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-(np.asarray(v, dtype=float) - rho) / kappa))
    return out[()] if isinstance(out, np.ndarray) else out


def bell_tau_eval(v, kin: GatingKinetics):
    d = np.asarray(v, dtype=float) - kin.zeta
    out = kin.tau_min + (kin.tau_max - kin.tau_min) * np.exp(-(d * d) / (kin.chi * kin.chi))
    return out[()] if isinstance(out, np.ndarray) else out


def gating_rate(x, v, kin: GatingKinetics):
    """Right-hand side of ``tau(v) dx/dt = -x + sigma(v)``."""
    return (-np.asarray(x, dtype=float) + sigmoid_eval(v, kin.rho, kin.kappa)) / bell_tau_eval(v, kin)


def synaptic_gating_rate(s, v_pre, kin: SynapticKinetics):
    sig = sigmoid_eval(v_pre, kin.rho, kin.kappa)
    tau = 1.0 / (kin.a * sig + kin.b)
    return (-np.asarray(s, dtype=float) + kin.a * tau * sig) / tau
