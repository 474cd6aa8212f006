"""scikit-learn style wrappers around the compiled observers.

Data convention: ``X`` holds the applied input samples ``u`` with shape
``(n_samples, n_v)`` (a 1-D array is read as a single neuron) and ``y`` the
measured voltages with shape ``(n_samples, n_drive)``, both on a uniform grid
of step ``dt`` ms. ``fit`` runs the observer from its configured initial
condition; ``partial_fit`` continues from the last state. ``transform``
and ``predict`` continue from the fitted state without modifying it.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import DimensionError
from ..model.compiled import CompiledModel, compile_model
from ..model.presets import preset
from ..model.spec import Parametrization, as_network
from . import _kernels as OK
from .dynamics import AugmentedObserverState, Hyperparameters, RlsObserverState, integrate
from .saturation import SaturationSpec


def _resolve_model(model, parametrization):
    if isinstance(model, CompiledModel):
        return model
    if isinstance(model, str):
        spec, par = preset(model)
    else:
        spec, par = model, None
    if parametrization is not None:
        par = parametrization if isinstance(parametrization, Parametrization) \
            else Parametrization(**parametrization)
    return compile_model(spec, par)


def _check_xy(X, y, n_v, n_drive):
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    y = check_array(y, ensure_2d=False, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if X.shape[1] == 1 and n_v > 1:
        X = np.repeat(X, n_v, axis=1)
    if X.shape != (y.shape[0], n_v):
        raise DimensionError(f"X must be (n_samples, {n_v}), got {X.shape}")
    if y.shape[1] != n_drive:
        raise DimensionError(f"y must be (n_samples, {n_drive}), got {y.shape}")
    if y.shape[0] < 2:
        raise ValueError("need at least two samples")
    return np.ascontiguousarray(X), np.ascontiguousarray(y)


def _box(box, default):
    if box is None:
        return default
    if isinstance(box, SaturationSpec):
        return box
    lo, hi = box
    return SaturationSpec.box(lo, hi)


class _ObserverBase(BaseEstimator):
    _mode = None

    def _model(self):
        return _resolve_model(self.model, self.parametrization)

    def _n_eta(self, m):
        return 0

    def _initial_state(self, m, y0):
        raise NotImplementedError

    def _sats(self, m):
        return None, None

    def _hyper(self):
        return None

    def _run(self, x0, X, y):
        m = self.model_
        sw, st = self.sat_w_, self.sat_theta_
        return integrate(m, self._mode, x0, y, X, self.dt, self.hyper_, sw, st,
                         hold=self.hold, stride=self.record_stride)

    def _store(self, out, xf, n_samples, t0):
        self.state_ = xf
        self.history_ = out
        self.t_ = t0 + np.arange(out.shape[0]) * self.dt * self.record_stride
        self.t_end_ = t0 + (n_samples - 1) * self.dt
        self._unpack_final()
        return self

    def _unpack_final(self):
        pass

    def fit(self, X, y):
        """Run the observer over ``(X, y)`` from the configured initial condition."""
        m = self._model()
        X, y = _check_xy(X, y, m.n_v, m.n_drive)
        self.model_ = m
        self.sat_w_, self.sat_theta_ = self._sats(m)
        self.hyper_ = self._hyper()
        x0 = self._initial_state(m, y[0])
        out, xf = self._run(x0, X, y)
        self.n_features_in_ = X.shape[1]
        return self._store(out, xf, y.shape[0], 0.0)

    def partial_fit(self, X, y):
        """Continue from the last state (the first sample is the current time)."""
        if not hasattr(self, "state_"):
            return self.fit(X, y)
        X, y = _check_xy(X, y, self.model_.n_v, self.model_.n_drive)
        out, xf = self._run(self.state_, X, y)
        return self._store(out, xf, y.shape[0], self.t_end_)

    def transform(self, X, y):
        """Recorded observer states over ``(X, y)``, continuing from the fitted state."""
        check_is_fitted(self, "state_")
        X, y = _check_xy(X, y, self.model_.n_v, self.model_.n_drive)
        out, _ = self._run(self.state_, X, y)
        return out

    def predict(self, X, y):
        """Voltage estimates ``v_hat`` at the recorded times."""
        return self.transform(X, y)[:, :self.model_.n_v]


class ReducedObserver(_ObserverBase):
    """Internal-state observer ``dw_hat/dt = A(y) w_hat + b(y)`` (no parameters)."""

    _mode = OK.REDUCED

    def __init__(self, model="hh", parametrization=None, w0=None, dt=0.01, hold="linear",
                 record_stride=1):
        self.model = model
        self.parametrization = parametrization
        self.w0 = w0
        self.dt = dt
        self.hold = hold
        self.record_stride = record_stride

    def _initial_state(self, m, y0):
        w0 = np.zeros(m.n_w) if self.w0 is None else np.asarray(self.w0, dtype=float)
        if w0.shape != (m.n_w,):
            raise DimensionError(f"w0 must have length {m.n_w}")
        return w0.copy()

    def _unpack_final(self):
        self.w_ = self.state_.copy()

    def predict(self, X, y):
        """Gate estimates at the recorded times."""
        return self.transform(X, y)


class RlsObserver(_ObserverBase):
    """Adaptive observer for the parameters entering linearly (RLS with forgetting)."""

    _mode = OK.RLS

    def __init__(self, model="hh", parametrization=None, theta0=None, v0=None, w0=None,
                 alpha=0.1, gamma=1.0, p0=1.0, dt=0.01, hold="linear", record_stride=1):
        self.model = model
        self.parametrization = parametrization
        self.theta0 = theta0
        self.v0 = v0
        self.w0 = w0
        self.alpha = alpha
        self.gamma = gamma
        self.p0 = p0
        self.dt = dt
        self.hold = hold
        self.record_stride = record_stride

    def _hyper(self):
        return Hyperparameters(self.alpha, self.gamma, 0.0, self.p0)

    def _initial_state(self, m, y0):
        th0 = np.ones(m.n_theta) if self.theta0 is None else np.asarray(self.theta0, float)
        if th0.shape != (m.n_theta,):
            raise DimensionError(f"theta0 must have length {m.n_theta}")
        v0 = _local(m, y0) if self.v0 is None else np.broadcast_to(
            np.asarray(self.v0, float), (m.n_v,)).copy()
        w0 = np.zeros(m.n_w) if self.w0 is None else np.asarray(self.w0, float)
        st = RlsObserverState(v0, w0, th0, np.zeros((m.n_v, m.n_theta)),
                              self.hyper_.p0_matrix(m.n_theta))
        return st.flat()

    def _unpack_final(self):
        m = self.model_
        s = RlsObserverState.from_flat(self.state_, m.n_v, m.n_w, m.n_theta)
        self.theta_ = s.theta_hat.copy()
        self.P_ = s.P.copy()
        self.Psi_ = s.Psi.copy()
        self.w_ = s.w_hat.copy()

    def unpack(self, records):
        m = self.model_
        return RlsObserverState.from_flat(records, m.n_v, m.n_w, m.n_theta)


def _local(m, y0):
    """Voltages of the modelled rows taken from a full drive vector."""
    return np.asarray(y0, float)[np.asarray(m.arrays.row_drive)]


class AugmentedObserver(_ObserverBase):
    """Adaptive observer estimating ``theta`` and the nonlinear parameters ``eta``.

    With ``output_error=True`` the regressor is evaluated at the estimated
    voltage, the variant intended for noisy measurements.
    """

    def __init__(self, model="hh", parametrization=None, theta0=None, eta0=None, v0=None,
                 w0=None, alpha=0.1, beta=1.0, gamma=1.0, p0=1.0, theta_box=None, w_box=None,
                 output_error=False, dt=0.01, hold="linear", record_stride=1):
        self.model = model
        self.parametrization = parametrization
        self.theta0 = theta0
        self.eta0 = eta0
        self.v0 = v0
        self.w0 = w0
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.p0 = p0
        self.theta_box = theta_box
        self.w_box = w_box
        self.output_error = output_error
        self.dt = dt
        self.hold = hold
        self.record_stride = record_stride

    @property
    def _mode(self):
        return OK.OUTPUT_ERROR if self.output_error else OK.AUGMENTED

    def _hyper(self):
        return Hyperparameters(self.alpha, self.gamma, self.beta, self.p0)

    def _theta0(self, m):
        th0 = np.ones(m.n_theta) if self.theta0 is None else np.asarray(self.theta0, float)
        if th0.shape != (m.n_theta,):
            raise DimensionError(f"theta0 must have length {m.n_theta}")
        return th0

    def _sats(self, m):
        return (_box(self.w_box, SaturationSpec.for_gates(m.n_w)),
                _box(self.theta_box, SaturationSpec.for_parameters(self._theta0(m))))

    def _initial_state(self, m, y0):
        th0 = self._theta0(m)
        eta0 = m.eta_true.copy() if self.eta0 is None else np.asarray(self.eta0, float)
        if eta0.shape != (m.n_eta,):
            raise DimensionError(f"eta0 must have length {m.n_eta}")
        v0 = _local(m, y0) if self.v0 is None else np.broadcast_to(
            np.asarray(self.v0, float), (m.n_v,)).copy()
        w0 = np.zeros(m.n_w) if self.w0 is None else np.asarray(self.w0, float)
        n_p = m.n_theta + m.n_eta
        st = AugmentedObserverState(v0, w0, th0, eta0, np.zeros((m.n_v, n_p)),
                                    np.zeros((m.n_w, n_p)), self.hyper_.p0_matrix(n_p))
        return st.flat()

    def _unpack_final(self):
        s = self.unpack(self.state_)
        self.theta_ = s.theta_hat.copy()
        self.eta_ = s.eta_hat.copy()
        self.P_ = s.P.copy()
        self.w_ = s.w_hat.copy()

    def unpack(self, records):
        m = self.model_
        return AugmentedObserverState.from_flat(records, m.n_v, m.n_w, m.n_theta, m.n_eta)


class NetworkObserver(BaseEstimator):
    """Decoupled per-neuron output-error observers for a network.

    Neuron ``i`` has its own ``theta``, ``eta``, ``Psi`` and ``P``; it reads
    the other neurons' measured voltages only through its synaptic gates.
    Per-neuron settings (``theta0``, ``eta0``, ``v0``, ``w0``) are lists with
    one entry per neuron, or a single value shared by all.
    """

    def __init__(self, model="hco", parametrization=None, theta0=None, eta0=None, v0=None,
                 w0=None, alpha=0.0025, beta=0.0, gamma=0.1, p0=0.1, theta_box=None,
                 w_box=None, dt=0.01, hold="linear", record_stride=1):
        self.model = model
        self.parametrization = parametrization
        self.theta0 = theta0
        self.eta0 = eta0
        self.v0 = v0
        self.w0 = w0
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.p0 = p0
        self.theta_box = theta_box
        self.w_box = w_box
        self.dt = dt
        self.hold = hold
        self.record_stride = record_stride

    def _spec_par(self):
        if isinstance(self.model, str):
            spec, par = preset(self.model)
        else:
            spec, par = self.model, None
        if self.parametrization is not None:
            par = self.parametrization if isinstance(self.parametrization, Parametrization) \
                else Parametrization(**self.parametrization)
        return as_network(spec), par

    @staticmethod
    def _per(value, i, n):
        if value is None:
            return None
        if isinstance(value, (list, tuple)) and len(value) == n and \
                all(np.ndim(v) >= 1 or v is None for v in value):
            return value[i]
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 2 and arr.shape[0] == n:
            return arr[i]
        return value

    def _sub(self, i, n, m):
        v0 = self._per(self.v0, i, n)
        if v0 is not None and np.ndim(v0) == 0:
            v0 = [float(v0)]
        return AugmentedObserver(
            model=m, theta0=self._per(self.theta0, i, n), eta0=self._per(self.eta0, i, n),
            v0=v0, w0=self._per(self.w0, i, n), alpha=self.alpha, beta=self.beta,
            gamma=self.gamma, p0=self.p0, theta_box=self._per(self.theta_box, i, n),
            w_box=self._per(self.w_box, i, n), output_error=True, dt=self.dt, hold=self.hold,
            record_stride=self.record_stride)

    def fit(self, X, y):
        spec, par = self._spec_par()
        n = spec.n_v
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        if X.ndim == 1:
            X = np.repeat(X[:, None], n, axis=1)
        y = check_array(y, dtype=np.float64)
        if X.shape != (y.shape[0], n) or y.shape[1] != n:
            raise DimensionError(f"X and y must both be (n_samples, {n})")
        self.observers_ = []
        for i in range(n):
            m = compile_model(spec, par, neurons=[i])
            obs = self._sub(i, n, m)
            obs.fit(X[:, [i]], y)
            self.observers_.append(obs)
        self.n_features_in_ = n
        self._collect()
        return self

    def partial_fit(self, X, y):
        if not hasattr(self, "observers_"):
            return self.fit(X, y)
        X, y = self._xy(X, y)
        for i, obs in enumerate(self.observers_):
            obs.partial_fit(X[:, [i]], y)
        self._collect()
        return self

    def _xy(self, X, y):
        n = len(self.observers_)
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        if X.ndim == 1:
            X = np.repeat(X[:, None], n, axis=1)
        y = check_array(y, dtype=np.float64)
        if X.shape != (y.shape[0], n) or y.shape[1] != n:
            raise DimensionError(f"X and y must both be (n_samples, {n})")
        return X, y

    def _collect(self):
        obs = self.observers_
        self.theta_ = [o.theta_ for o in obs]
        self.eta_ = [o.eta_ for o in obs]
        self.P_ = [o.P_ for o in obs]
        self.t_ = obs[0].t_
        self.theta_labels_ = [o.model_.theta_labels for o in obs]

    def transform(self, X, y):
        """Per-neuron recorded state arrays (a list)."""
        check_is_fitted(self, "observers_")
        X, y = self._xy(X, y)
        return [o.transform(X[:, [i]], y) for i, o in enumerate(self.observers_)]

    def predict(self, X, y):
        check_is_fitted(self, "observers_")
        X, y = self._xy(X, y)
        return np.hstack([o.predict(X[:, [i]], y) for i, o in enumerate(self.observers_)])
