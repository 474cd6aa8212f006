"""Observer states, hyperparameters and single-point right-hand sides.

The functions here evaluate one derivative at a time and are meant for
inspection and testing; whole runs go through :func:`integrate`, which uses
the compiled loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConditioningError, DimensionError, IntegrationError
from ..model.compiled import CompiledModel, compile_model
from . import _kernels as OK
from .saturation import SaturationSpec

P_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperparameters:
    """Forgetting rate ``alpha`` (1/ms), inflation ``beta``, gain ``gamma`` (1/ms), ``P(0)``."""

    alpha: float
    gamma: float
    beta: float = 0.0
    p0: object = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    def p0_matrix(self, n):
        p0 = np.asarray(self.p0, dtype=float)
        P = p0 * np.eye(n) if p0.ndim == 0 else p0.copy()
        if P.shape != (n, n):
            raise DimensionError(f"P(0) must be ({n}, {n}), got {P.shape}")
        if not np.allclose(P, P.T):
            raise ValueError("P(0) must be symmetric")
        if n and np.linalg.eigvalsh(P).min() <= 0:
            raise ValueError("P(0) must be positive definite")
        return P

    def packed(self):
        return np.array([self.alpha, self.beta, self.gamma])


@dataclass
class RlsObserverState:
    v_hat: np.ndarray
    w_hat: np.ndarray
    theta_hat: np.ndarray
    Psi: np.ndarray
    P: np.ndarray

    def flat(self):
        return np.concatenate([np.ravel(self.v_hat), np.ravel(self.w_hat), np.ravel(self.theta_hat),
                               np.ravel(self.Psi), np.ravel(self.P)]).astype(float)

    @classmethod
    def from_flat(cls, x, n_v, n_w, n_th):
        x = np.asarray(x, dtype=float)
        o = np.cumsum([0, n_v, n_w, n_th, n_v * n_th, n_th * n_th])
        if x.shape[-1] != o[-1]:
            raise DimensionError(f"flat RLS state must have length {o[-1]}, got {x.shape[-1]}")
        return cls(x[..., o[0]:o[1]], x[..., o[1]:o[2]], x[..., o[2]:o[3]],
                   x[..., o[3]:o[4]].reshape(x.shape[:-1] + (n_v, n_th)),
                   x[..., o[4]:o[5]].reshape(x.shape[:-1] + (n_th, n_th)))


@dataclass
class AugmentedObserverState:
    v_hat: np.ndarray
    w_hat: np.ndarray
    theta_hat: np.ndarray
    eta_hat: np.ndarray
    Psi_v: np.ndarray
    Psi_w: np.ndarray
    P: np.ndarray

    def flat(self):
        return np.concatenate([np.ravel(a) for a in (self.v_hat, self.w_hat, self.theta_hat,
                                                      self.eta_hat, self.Psi_v, self.Psi_w,
                                                      self.P)]).astype(float)

    @classmethod
    def from_flat(cls, x, n_v, n_w, n_th, n_eta):
        x = np.asarray(x, dtype=float)
        n_p = n_th + n_eta
        o = np.cumsum([0, n_v, n_w, n_th, n_eta, n_v * n_p, n_w * n_p, n_p * n_p])
        if x.shape[-1] != o[-1]:
            raise DimensionError(f"flat augmented state must have length {o[-1]}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        return cls(x[..., o[0]:o[1]], x[..., o[1]:o[2]], x[..., o[2]:o[3]], x[..., o[3]:o[4]],
                   x[..., o[4]:o[5]].reshape(lead + (n_v, n_p)),
                   x[..., o[5]:o[6]].reshape(lead + (n_w, n_p)),
                   x[..., o[6]:o[7]].reshape(lead + (n_p, n_p)))


def symmetrize_p(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError("P must be square")
    return 0.5 * (P + P.T)


def _model(spec, par):
    return spec if isinstance(spec, CompiledModel) else compile_model(spec, par)


def _drive(model, v_measured):
    v = np.ascontiguousarray(np.atleast_1d(np.asarray(v_measured, dtype=float)))
    if v.shape != (model.n_drive,):
        raise DimensionError(f"measurement must have length {model.n_drive}, got {v.shape}")
    return v


def _u(model, u):
    return np.ascontiguousarray(np.broadcast_to(np.asarray(u, dtype=float), (model.n_v,)))


def _default_sats(model, theta0):
    return SaturationSpec.for_gates(model.n_w), SaturationSpec.for_parameters(theta0)


def _eval(model, mode, hyp, sat_w, sat_th, yd, u, x):
    dx = np.empty_like(x)
    work = OK.make_work(model.arrays, yd.shape[0])
    OK._rhs(model.arrays, mode, hyp, sat_w, sat_th, yd, u, x, dx, work)
    return dx


def reduced_observer_rhs(w_hat, v_measured, spec, par=None):
    """``A(v) w_hat + b(v)`` with the measured voltage injected."""
    model = _model(spec, par)
    w = np.ascontiguousarray(w_hat, dtype=float)
    if w.shape != (model.n_w,):
        raise DimensionError(f"w_hat must have length {model.n_w}")
    return _eval(model, OK.REDUCED, np.zeros(3), np.zeros((3, 0)), np.zeros((3, 0)),
                 _drive(model, v_measured), np.zeros(model.n_v), w)


def rls_observer_rhs(state: RlsObserverState, v_measured, u, hyper: Hyperparameters, spec, par=None):
    model = _model(spec, par)
    x = state.flat()
    OK_size = OK.state_size(OK.RLS, model.n_v, model.n_w, model.n_theta, 0)
    if x.shape[0] != OK_size:
        raise DimensionError("state dimensions do not match the model")
    dx = _eval(model, OK.RLS, hyper.packed(), np.zeros((3, 0)), np.zeros((3, 0)),
               _drive(model, v_measured), _u(model, u), x)
    return RlsObserverState.from_flat(dx, model.n_v, model.n_w, model.n_theta)


def _aug(mode, state, measured, u, hyper, spec, par, sat_w, sat_theta):
    model = _model(spec, par)
    x = state.flat()
    if x.shape[0] != OK.state_size(mode, model.n_v, model.n_w, model.n_theta, model.n_eta):
        raise DimensionError("state dimensions do not match the model")
    dw, dth = _default_sats(model, state.theta_hat)
    sat_w = (sat_w or dw).packed()
    sat_theta = (sat_theta or dth).packed()
    dx = _eval(model, mode, hyper.packed(), sat_w, sat_theta, _drive(model, measured),
               _u(model, u), x)
    return AugmentedObserverState.from_flat(dx, model.n_v, model.n_w, model.n_theta, model.n_eta)


def augmented_observer_rhs(state: AugmentedObserverState, v_measured, u, hyper: Hyperparameters,
                           spec, par=None, sat_w: SaturationSpec | None = None,
                           sat_theta: SaturationSpec | None = None):
    return _aug(OK.AUGMENTED, state, v_measured, u, hyper, spec, par, sat_w, sat_theta)


def output_error_observer_rhs(state: AugmentedObserverState, y_measured, u, hyper: Hyperparameters,
                              spec, par=None, sat_w: SaturationSpec | None = None,
                              sat_theta: SaturationSpec | None = None):
    return _aug(OK.OUTPUT_ERROR, state, y_measured, u, hyper, spec, par, sat_w, sat_theta)


def network_observer_rhs(states, y, u, hyper, spec, par=None, sat_w=None, sat_theta=None):
    """Per-neuron output-error derivatives; neuron ``i`` sees ``y`` only via its gates.

    ``hyper``/``sat_w``/``sat_theta`` may be single objects or per-neuron lists.
    """
    from ..model.spec import as_network
    spec = as_network(spec)
    n = spec.n_v
    if len(states) != n:
        raise DimensionError(f"need {n} per-neuron states, got {len(states)}")
    hyp = hyper if isinstance(hyper, (list, tuple)) else [hyper] * n
    sw = sat_w if isinstance(sat_w, (list, tuple)) else [sat_w] * n
    st = sat_theta if isinstance(sat_theta, (list, tuple)) else [sat_theta] * n
    u = np.broadcast_to(np.asarray(u, dtype=float), (n,))
    out = []
    for i in range(n):
        sub = compile_model(spec, par, neurons=[i])
        out.append(output_error_observer_rhs(states[i], y, u[i], hyp[i], sub, None, sw[i], st[i]))
    return out


# ----------------------------------------------------------------------------
# whole-run driver


# RK4 is stable on the real axis up to |h lambda| ~ 2.78; keep a margin.
STEP_LIMIT = 1.0
MAX_SUBSTEPS = 4096


def integrate(model: CompiledModel, mode, x0, Y, U, dt, hyper: Hyperparameters | None = None,
              sat_w: SaturationSpec | None = None, sat_theta: SaturationSpec | None = None,
              hold="linear", stride=1, step_limit=STEP_LIMIT, max_substeps=MAX_SUBSTEPS):
    """Run an observer over sampled data; returns ``(records, final_state)``.

    Steps on which ``dt`` times the stiffness of the covariance and
    injection terms exceeds ``step_limit`` are split into at most
    ``max_substeps`` substeps; ``step_limit=0`` disables this.

    Raises :class:`IntegrationError` on a non-finite state and
    :class:`ConditioningError` when ``P`` stops being positive definite.
    """
    Y = np.ascontiguousarray(Y, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != model.n_drive:
        raise DimensionError(f"measurements must be (n_t, {model.n_drive}), got {Y.shape}")
    if U.shape != (Y.shape[0], model.n_v):
        raise DimensionError(f"inputs must be ({Y.shape[0]}, {model.n_v}), got {U.shape}")
    if hold not in ("zoh", "linear"):
        raise ValueError("hold must be 'zoh' or 'linear'")
    n_eta = model.n_eta if mode in (OK.AUGMENTED, OK.OUTPUT_ERROR) else 0
    n_x = OK.state_size(mode, model.n_v, model.n_w, model.n_theta, n_eta)
    x0 = np.ascontiguousarray(x0, dtype=float)
    if x0.shape != (n_x,):
        raise DimensionError(f"initial state must have length {n_x}, got {x0.shape}")
    if mode == OK.REDUCED:
        n_p, p_off, psi_off = 0, 0, -1
    elif mode == OK.RLS:
        n_p = model.n_theta
        p_off = n_x - n_p * n_p
        psi_off = p_off - model.n_v * n_p
    else:
        n_p = model.n_theta + n_eta
        p_off = n_x - n_p * n_p
        psi_off = p_off - (model.n_v + model.n_w) * n_p
    hyp = hyper.packed() if hyper is not None else np.zeros(3)
    sw = sat_w.packed() if sat_w is not None else np.zeros((3, model.n_w))
    st = sat_theta.packed() if sat_theta is not None else np.zeros((3, model.n_theta))
    stride = int(stride)
    n_rec = (Y.shape[0] - 1) // stride + 1
    out = np.empty((n_rec, n_x))
    xf = np.empty(n_x)
    status, step, comp = OK.run(model.arrays, mode, hyp, sw, st, Y, U, x0, float(dt),
                                OK.LINEAR if hold == "linear" else OK.ZOH, stride, p_off, n_p,
                                P_FLOOR, out, xf, psi_off, float(step_limit), int(max_substeps))
    if status == 1:
        raise IntegrationError(f"observer state component {comp} became non-finite at step {step}",
                               component=int(comp), step=int(step))
    if status == 2:
        raise ConditioningError(f"P lost positive definiteness (min eigenvalue <= {P_FLOOR}) "
                                f"at step {step}", step=int(step))
    return out, xf
