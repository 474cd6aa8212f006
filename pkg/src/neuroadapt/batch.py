"""Offline estimation: filtered least squares with forgetting, and output-error costs.

The filtered least-squares solution reproduces the recursive observer
exactly (up to quadrature) when the same filter, grid and prior are used,
so it serves as an independent oracle for the online estimate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import count_spikes
from .errors import DimensionError, IntegrationError, NotPersistentlyExcitingError
from .integrator import Trajectory, simulate, write_csv
from .model import _kernels as K
from .model.compiled import CompiledModel, compile_model, override_conductances
from .model.presets import preset
from .model.spec import Parametrization, as_network
from .observers import _kernels as OK

# ----------------------------------------------------------------------------
# first-order filter


@njit(cache=True)
def _lag_run(S, gamma, dt, x0, linear, out):
    n_t, n = S.shape
    x = x0.copy()
    out[0] = x
    for s in range(n_t - 1):
        for i in range(n):
            s0 = S[s, i]
            s1 = S[s + 1, i] if linear else s0
            sm = 0.5 * (s0 + s1)
            k1 = -gamma * x[i] + gamma * s0
            k2 = -gamma * (x[i] + 0.5 * dt * k1) + gamma * sm
            k3 = -gamma * (x[i] + 0.5 * dt * k2) + gamma * sm
            k4 = -gamma * (x[i] + dt * k3) + gamma * s1
            x[i] += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[s + 1] = x


def filter_first_order(signal, gamma, dt, x0=0.0, hold="linear"):
    """Output of ``dx/dt = -gamma x + gamma s(t)`` sampled on the grid.

    ``signal`` holds samples of ``s`` (any trailing shape); between samples
    it is interpolated linearly (``hold="linear"``) or held (``"zoh"``).
    Integration is RK4 on the sample grid.
    """
    if not gamma > 0 or not dt > 0:
        raise ValueError("gamma and dt must be > 0")
    S = np.asarray(signal, dtype=float)
    shape = S.shape
    S2 = np.ascontiguousarray(S.reshape(shape[0], -1))
    x0 = np.ascontiguousarray(np.broadcast_to(np.asarray(x0, dtype=float), S2.shape[1:]).copy())
    out = np.empty_like(S2)
    _lag_run(S2, float(gamma), float(dt), x0, hold == "linear", out)
    return out.reshape(shape)


def filtered_derivative(v, filtered_v, gamma):
    """``H dv/dt`` from the identity ``gamma (v - H v)``, valid when ``H v`` starts at ``v(0)``."""
    return gamma * (np.asarray(v, dtype=float) - np.asarray(filtered_v, dtype=float))


# ----------------------------------------------------------------------------
# filtered dataset


@njit(cache=True)
def _dataset_rhs(M, gamma, yd, u, x, dx, work):
    # same arithmetic as the recursive observer for w_hat and Psi
    n_v = M.c.shape[0]
    n_w = M.g_kind.shape[0]
    n_th = M.col_row.shape[0]
    yloc, Phi, a = work[3], work[5], work[6]
    Ad, b = work[8], work[9]
    g, dgm, dgh = work[17], work[18], work[19]
    wh = x[:n_w]
    o_ps = n_w
    o_hv = o_ps + n_v * n_th
    o_ha = o_hv + n_v
    Psi = x[o_ps:o_hv].reshape((n_v, n_th))
    for r in range(n_v):
        yloc[r] = yd[M.row_drive[r]]
    K.gating_values(M, wh, g, dgm, dgh)
    K.regressor_g(M, yloc, g, u, Phi, a)
    K.internal_terms(M.g_kind, M.g_src, M.g_par, yd, Ad, b)
    for j in range(n_w):
        dx[j] = Ad[j] * wh[j] + b[j]
    for r in range(n_v):
        for j in range(n_th):
            dx[o_ps + r * n_th + j] = -gamma * Psi[r, j] + gamma * Phi[r, j]
    for r in range(n_v):
        dx[o_hv + r] = -gamma * x[o_hv + r] + gamma * yloc[r]
        dx[o_ha + r] = -gamma * x[o_ha + r] + gamma * a[r]


@njit(cache=True)
def _dataset_run(M, gamma, Y, U, x0, dt, linear, out):
    n_t = Y.shape[0]
    n = x0.shape[0]
    work = OK.make_work(M, Y.shape[1])
    x = x0.copy()
    xs = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    ym = np.empty(Y.shape[1])
    um = np.empty(U.shape[1])
    out[0] = x
    for s in range(n_t - 1):
        y0 = Y[s]
        u0 = U[s]
        if linear:
            y1 = Y[s + 1]
            u1 = U[s + 1]
            for i in range(ym.shape[0]):
                ym[i] = 0.5 * (y0[i] + y1[i])
            for i in range(um.shape[0]):
                um[i] = 0.5 * (u0[i] + u1[i])
        else:
            y1 = y0
            u1 = u0
            ym[:] = y0
            um[:] = u0
        _dataset_rhs(M, gamma, y0, u0, x, k1, work)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k1[i]
        _dataset_rhs(M, gamma, ym, um, xs, k2, work)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        _dataset_rhs(M, gamma, ym, um, xs, k3, work)
        for i in range(n):
            xs[i] = x[i] + dt * k3[i]
        _dataset_rhs(M, gamma, y1, u1, xs, k4, work)
        for i in range(n):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        out[s + 1] = x


@dataclass
class FilteredDataset:
    """Filtered regressor and targets on the sample grid.

    ``Psi`` is (n_t, n_v, n_theta); ``Hvdot`` and ``Ha`` are (n_t, n_v).
    The least-squares target is ``Hvdot - Ha``.
    """

    t: np.ndarray
    Psi: np.ndarray
    Hvdot: np.ndarray
    Ha: np.ndarray
    w_hat: np.ndarray
    gamma: float
    dt: float
    theta_labels: list

    @property
    def target(self):
        return self.Hvdot - self.Ha


def build_filtered_dataset(trajectory: Trajectory | None = None, spec=None, par=None, gamma=1.0, *,
                           u=None, y=None, dt=None, w0=None, v_filter0=None, hold="linear"):
    """Integrate ``w_hat``, ``Psi``, ``H v`` and ``H a`` from sampled data.

    Data come from ``trajectory`` (its ``u`` and ``y``) or from explicit
    ``u``, ``y`` and ``dt``. ``w_hat`` starts at ``w0`` (default 0) and is
    driven by the measurement, as in the reduced observer; ``Psi`` and ``H a``
    start at zero and ``H v`` starts at ``v_filter0`` (default ``y(0)``),
    which must equal the observer's ``v_hat(0)`` for the two to coincide.
    """
    if trajectory is not None:
        u, y, dt = trajectory.u, trajectory.y, trajectory.dt
    if u is None or y is None or dt is None:
        raise DimensionError("need a trajectory or explicit u, y and dt")
    m = spec if isinstance(spec, CompiledModel) else compile_model(spec, par)
    Y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(len(y), -1))
    U = np.ascontiguousarray(np.asarray(u, dtype=float).reshape(len(u), -1))
    if Y.shape[1] != m.n_drive or U.shape != (Y.shape[0], m.n_v):
        raise DimensionError("u/y shapes do not match the model")
    n_v, n_w, n_th = m.n_v, m.n_w, m.n_theta
    x0 = np.zeros(n_w + n_v * n_th + 2 * n_v)
    if w0 is not None:
        x0[:n_w] = w0
    vf0 = Y[0, np.asarray(m.arrays.row_drive)] if v_filter0 is None else v_filter0
    x0[n_w + n_v * n_th:n_w + n_v * n_th + n_v] = vf0
    out = np.empty((Y.shape[0], x0.size))
    _dataset_run(m.arrays, float(gamma), Y, U, x0, float(dt), hold == "linear", out)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("filtered dataset became non-finite")
    o = n_w + n_v * n_th
    Psi = out[:, n_w:o].reshape(-1, n_v, n_th)
    Hv = out[:, o:o + n_v]
    Ha = out[:, o + n_v:]
    yloc = Y[:, np.asarray(m.arrays.row_drive)]
    t = np.arange(Y.shape[0]) * dt
    return FilteredDataset(t, Psi, filtered_derivative(yloc, Hv, gamma), Ha, out[:, :n_w],
                           float(gamma), float(dt), list(m.theta_labels))


# ----------------------------------------------------------------------------
# batch solve


@dataclass
class BatchSolution:
    T: np.ndarray
    theta: np.ndarray
    R: np.ndarray
    cost: np.ndarray

    @property
    def min_eig_R(self):
        return np.array([np.linalg.eigvalsh(r)[0] for r in self.R])

    def table(self, labels=None):
        n = self.theta.shape[1]
        labels = labels or [f"theta_{i}" for i in range(n)]
        names = ["T_ms"] + [f"theta_hat.{l}" for l in labels] + ["min_eig_R", "cost"]
        data = np.column_stack([self.T, self.theta, self.min_eig_R, self.cost])
        return names, data


def batch_ls_solve(data: FilteredDataset, alpha, P0, T_list, theta0=None):
    """Weighted least squares with forgetting, by trapezoidal quadrature on the grid.

    Solves ``R(T) theta = e^{-alpha T} P0^{-1} theta0 + int_0^T e^{-alpha (T - s)} Psi^T (Hvdot - Ha) ds``
    with ``R(T) = e^{-alpha T} P0^{-1} + int_0^T e^{-alpha (T - s)} Psi^T Psi ds``.
    ``theta0`` (default 0) is the prior mean; it is the observer's initial
    estimate when comparing with the recursive solution.
    """
    if not alpha >= 0:
        raise ValueError("alpha must be >= 0")
    n_th = data.Psi.shape[2]
    P0 = np.asarray(P0, dtype=float)
    P0 = P0 * np.eye(n_th) if P0.ndim == 0 else P0
    if P0.shape != (n_th, n_th):
        raise DimensionError(f"P0 must be ({n_th}, {n_th})")
    R0 = np.linalg.inv(P0)
    theta0 = np.zeros(n_th) if theta0 is None else np.asarray(theta0, dtype=float)
    G = np.einsum("tvi,tvj->tij", data.Psi, data.Psi)
    g = np.einsum("tvi,tv->ti", data.Psi, data.target)
    zz = np.einsum("tv,tv->t", data.target, data.target)
    T_list = np.atleast_1d(np.asarray(T_list, dtype=float))
    thetas, Rs, costs = [], [], []
    for T in T_list:
        k = int(round(T / data.dt))
        if k < 1 or k >= data.t.size or abs(k * data.dt - T) > 1e-9 * max(T, 1.0):
            raise ValueError(f"T={T} is not on the grid (0, {data.t[-1]}]")
        wts = np.exp(-alpha * (T - data.t[:k + 1])) * data.dt
        wts[0] *= 0.5
        wts[-1] *= 0.5
        decay = np.exp(-alpha * T)
        R = decay * R0 + np.einsum("t,tij->ij", wts, G[:k + 1])
        rhs = decay * R0 @ theta0 + wts @ g[:k + 1]
        R = 0.5 * (R + R.T)
        lam = np.linalg.eigvalsh(R)[0]
        if not lam > 0:
            raise NotPersistentlyExcitingError(
                f"information matrix is singular at T={T} (min eigenvalue {lam:.3e})", min_eig=lam)
        th = np.linalg.solve(R, rhs)
        # weighted residual of the quadratic problem, prior included
        d = th - theta0
        cost = float(wts @ zz[:k + 1] - 2.0 * th @ (wts @ g[:k + 1])
                     + th @ np.einsum("t,tij->ij", wts, G[:k + 1]) @ th + decay * d @ R0 @ d)
        thetas.append(th)
        Rs.append(R)
        costs.append(cost)
    return BatchSolution(T_list, np.array(thetas), np.array(Rs), np.array(costs))


class BatchLeastSquares(BaseEstimator):
    """Filtered least squares with forgetting as an estimator.

    ``fit(X, y)`` takes input samples ``X`` (n_samples, n_v) and measured
    voltages ``y`` and solves at ``T`` (default: the end of the data).
    ``transform`` returns the filtered regressor and ``predict`` the
    filtered prediction ``Psi theta + Ha`` of ``H dv/dt``.
    """

    def __init__(self, model="hh", parametrization=None, alpha=0.1, gamma=1.0, p0=1.0,
                 theta0=None, w0=None, v0=None, T=None, dt=0.01, hold="linear"):
        self.model = model
        self.parametrization = parametrization
        self.alpha = alpha
        self.gamma = gamma
        self.p0 = p0
        self.theta0 = theta0
        self.w0 = w0
        self.v0 = v0
        self.T = T
        self.dt = dt
        self.hold = hold

    def _compiled(self):
        if isinstance(self.model, CompiledModel):
            return self.model
        spec, par = preset(self.model) if isinstance(self.model, str) else (self.model, None)
        if self.parametrization is not None:
            par = self.parametrization if isinstance(self.parametrization, Parametrization) \
                else Parametrization(**self.parametrization)
        return compile_model(spec, par)

    def _dataset(self, X, y):
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        y = check_array(y, ensure_2d=False, dtype=np.float64)
        m = self.model_
        return build_filtered_dataset(None, m, gamma=self.gamma, u=X, y=y, dt=self.dt,
                                      w0=self.w0, v_filter0=self.v0, hold=self.hold)

    def fit(self, X, y):
        self.model_ = self._compiled()
        data = self._dataset(X, y)
        T = data.t[-1] if self.T is None else self.T
        sol = batch_ls_solve(data, self.alpha, self.p0, [T], self.theta0)
        self.dataset_ = data
        self.solution_ = sol
        self.theta_ = sol.theta[0]
        self.R_ = sol.R[0]
        self.n_features_in_ = data.Psi.shape[1]
        return self

    def transform(self, X, y):
        check_is_fitted(self, "theta_")
        return self._dataset(X, y).Psi

    def predict(self, X, y):
        check_is_fitted(self, "theta_")
        data = self._dataset(X, y)
        return np.einsum("tvi,i->tv", data.Psi, self.theta_) + data.Ha


# ----------------------------------------------------------------------------
# output-error cost


@dataclass
class CostResult:
    cost: float
    finite: bool
    spikes: int
    t: np.ndarray | None = None
    v_hat: np.ndarray | None = None


def _overrides(candidate, current, neuron):
    if isinstance(candidate, dict):
        return dict(candidate)
    return {(neuron, current): float(candidate)}


def output_error_cost(theta_candidate, trajectory: Trajectory, spec, T, u, *, current="Na",
                      neuron=0, keep_trace=False):
    """``(1/T) int_0^T (v - v_hat)^2 dt`` (mV^2) for a free-running predictor.

    The predictor is the model with the candidate conductance(s), started
    from the measured trajectory's initial state and driven by the same
    input signal ``u``; the measured voltage is never injected.
    ``theta_candidate`` is a conductance for ``current`` or a mapping
    ``{(neuron, current): value}``. A blow-up gives ``cost = inf`` and
    ``finite = False``.
    """
    spec = as_network(spec)
    dt = trajectory.dt
    k = int(round(T / dt))
    if k < 1 or k > trajectory.n_steps:
        raise ValueError(f"T={T} exceeds the data ({trajectory.t[-1]} ms)")
    pred_spec = override_conductances(spec, _overrides(theta_candidate, current, neuron))
    try:
        pred = simulate(pred_spec, trajectory.state(0), u, k * dt, dt)
    except IntegrationError:
        return CostResult(np.inf, False, -1)
    err2 = np.sum((trajectory.v[:k + 1] - pred.v) ** 2, axis=1)
    cost = float(np.trapezoid(err2, dx=dt) / (k * dt))
    spikes = count_spikes(pred.t, pred.v[:, neuron])
    if keep_trace:
        return CostResult(cost, True, spikes, pred.t, pred.v)
    return CostResult(cost, True, spikes)


@dataclass
class Landscape:
    candidates: np.ndarray
    cost: np.ndarray
    grad: np.ndarray
    spikes: np.ndarray
    finite: np.ndarray

    def table(self):
        return (["candidate", "cost", "grad", "spikes"],
                np.column_stack([self.candidates, self.cost, self.grad, self.spikes]))

    def write_csv(self, path):
        write_csv(path, *self.table())

    @property
    def max_jump_interval(self):
        """Consecutive candidate pair with the largest absolute cost change."""
        d = np.abs(np.diff(self.cost))
        i = int(np.nanargmax(d))
        return float(self.candidates[i]), float(self.candidates[i + 1])


def cost_landscape(grid, trajectory, spec, T, u, *, current="Na", neuron=0):
    """Cost, central-difference gradient and predictor spike count on a 1-D grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a strictly increasing 1-D array of length >= 2")
    res = [output_error_cost(c, trajectory, spec, T, u, current=current, neuron=neuron)
           for c in grid]
    cost = np.array([r.cost for r in res])
    finite = np.array([r.finite for r in res])
    grad = np.gradient(cost, grid) if finite.all() else np.full_like(cost, np.nan)
    return Landscape(grid, cost, grad, np.array([r.spikes for r in res]), finite)


def spike_onset(trajectory, spec, T, u, lo, hi, *, current="Na", neuron=0, tol=1e-3):
    """Bisect for the conductance at which the predictor's spike count steps up.

    Requires fewer spikes at ``lo`` than at ``hi``. Returns the list of
    successive brackets, which shrink monotonically.
    """
    def n(c):
        return output_error_cost(c, trajectory, spec, T, u, current=current, neuron=neuron).spikes

    n_lo, n_hi = n(lo), n(hi)
    if not n_lo < n_hi:
        raise ValueError(f"no spike-count step in [{lo}, {hi}] ({n_lo} vs {n_hi} spikes)")
    brackets = [(float(lo), float(hi))]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if n(mid) > n_lo:
            hi = mid
        else:
            lo = mid
        brackets.append((float(lo), float(hi)))
    return brackets
