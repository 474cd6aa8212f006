"""Fixed-step RK4 integration of the true plant and trajectory records."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, DimensionError, IntegrationError
from .model import _kernels as K
from .model.compiled import compile_model
from .model.spec import Parametrization, as_network
from .signals import InputSignal, ParameterSchedule, pack_signals, signal_eval


def rk4_step(rhs, state, t, dt):
    """One classical Runge-Kutta step of ``dx/dt = rhs(t, x)``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(state, dtype=float)
    k1 = _checked(rhs(t, x), t)
    k2 = _checked(rhs(t + 0.5 * dt, x + 0.5 * dt * k1), t + 0.5 * dt)
    k3 = _checked(rhs(t + 0.5 * dt, x + 0.5 * dt * k2), t + 0.5 * dt)
    k4 = _checked(rhs(t + dt, x + dt * k3), t + dt)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checked(d, t):
    d = np.asarray(d, dtype=float)
    bad = np.flatnonzero(~np.isfinite(d))
    if bad.size:
        raise IntegrationError(f"non-finite derivative in component {bad[0]} at t={t}",
                               component=int(bad[0]))
    return d


# ----------------------------------------------------------------------------
# compiled plant


@njit(cache=True)
def _plant_rhs(M, n_v, t, x, sig_kind, sig_par, sch_k, sch_kind, sch_par, ws, Ad, b, dx):
    mu, g, dgm, dgh = ws[0], ws[1], ws[2], ws[3]
    for k in range(mu.shape[0]):
        mu[k] = M.k_mu[k]
    for j in range(sch_k.shape[0]):
        mu[sch_k[j]] = signal_eval(sch_kind[j], sch_par[j], t)
    for r in range(n_v):
        dx[r] = signal_eval(sig_kind[r], sig_par[r], t)
    w = x[n_v:]
    K.gating_values(M, w, g, dgm, dgh)
    for k in range(M.k_row.shape[0]):
        r = M.k_row[k]
        dx[r] -= mu[k] * g[k] * (x[r] - M.k_nu[k])
    for r in range(n_v):
        dx[r] /= M.c[r]
    K.internal_terms(M.g_kind, M.g_src, M.g_par, x[:n_v], Ad, b)
    for j in range(Ad.shape[0]):
        dx[n_v + j] = Ad[j] * w[j] + b[j]


@njit(cache=True)
def _plant_loop(M, n_v, x0, dt, n_steps, stride, sig_kind, sig_par, sch_k, sch_kind, sch_par,
                V, U, W):
    n = x0.shape[0]
    n_w = n - n_v
    x = x0.copy()
    xs = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    ws = np.empty((4, M.k_mu.shape[0]))
    Ad = np.empty(n_w)
    b = np.empty(n_w)
    for r in range(n_v):
        V[0, r] = x[r]
        U[0, r] = signal_eval(sig_kind[r], sig_par[r], 0.0)
    W[0, :] = x[n_v:]
    for s in range(n_steps):
        t = s * dt
        _plant_rhs(M, n_v, t, x, sig_kind, sig_par, sch_k, sch_kind, sch_par, ws, Ad, b, k1)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k1[i]
        _plant_rhs(M, n_v, t + 0.5 * dt, xs, sig_kind, sig_par, sch_k, sch_kind, sch_par, ws, Ad, b, k2)
        for i in range(n):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        _plant_rhs(M, n_v, t + 0.5 * dt, xs, sig_kind, sig_par, sch_k, sch_kind, sch_par, ws, Ad, b, k3)
        for i in range(n):
            xs[i] = x[i] + dt * k3[i]
        _plant_rhs(M, n_v, t + dt, xs, sig_kind, sig_par, sch_k, sch_kind, sch_par, ws, Ad, b, k4)
        for i in range(n):
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not np.isfinite(x[i]):
                return s + 1, i
        t1 = (s + 1) * dt
        for r in range(n_v):
            V[s + 1, r] = x[r]
            U[s + 1, r] = signal_eval(sig_kind[r], sig_par[r], t1)
        if (s + 1) % stride == 0:
            W[(s + 1) // stride, :] = x[n_v:]
    return -1, -1


@dataclass
class Trajectory:
    """Uniformly sampled record of one simulation.

    ``v``, ``u`` and ``y`` hold every grid point; ``w`` is kept every
    ``w_stride`` steps (``w[i]`` belongs to ``t[i * w_stride]``).
    """

    t: np.ndarray
    v: np.ndarray
    u: np.ndarray
    y: np.ndarray
    w: np.ndarray
    dt: float
    w_stride: int = 1
    gate_labels: list = field(default_factory=list)
    noise_sigma: float = 0.0
    seed: int | None = None

    @property
    def n_steps(self):
        return self.t.shape[0] - 1

    @property
    def t_w(self):
        return self.t[::self.w_stride]

    def state(self, i):
        """Full plant state at recorded index ``i`` of the ``w`` grid."""
        return np.concatenate([self.v[i * self.w_stride], self.w[i]])


def simulate(spec, x0, u, t_end, dt=0.01, schedule: ParameterSchedule | None = None,
             noise_sigma=0.0, seed=None, rng=None, w_stride=1):
    """Integrate the true plant and sample a noisy measurement of its voltages.

    ``u`` is one :class:`InputSignal` shared by every neuron or a list with one
    signal per neuron; it and the schedule are evaluated at the RK4 stage
    times. The measurement is ``y_k = v(t_k) + sigma * N(0, 1)``, one draw per
    grid point from ``rng`` (or a generator seeded with ``seed``).
    """
    spec = as_network(spec)
    if not dt > 0:
        raise ValueError("dt must be > 0")
    n_steps = int(round(t_end / dt))
    if n_steps < 1 or abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError(f"t_end={t_end} is not a positive multiple of dt={dt}")
    if w_stride < 1 or n_steps % w_stride:
        raise ConfigError("w_stride must divide the number of steps")
    model = compile_model(spec, Parametrization(layout="conductance", currents=()))
    n_v, n_w = model.n_v, model.n_w
    x0 = np.ascontiguousarray(x0, dtype=float)
    if x0.shape != (n_v + n_w,):
        raise DimensionError(f"x0 must have length {n_v + n_w}, got {x0.shape}")
    signals = [u] * n_v if isinstance(u, InputSignal) else list(u)
    if len(signals) != n_v:
        raise DimensionError(f"need {n_v} input signals, got {len(signals)}")
    sig_kind, sig_par = pack_signals(signals)

    sch_k, sch_sig = [], []
    for (i, name), sig in (schedule.entries.items() if schedule else ()):
        try:
            sch_k.append(model.current_keys.index((i, name)))
        except ValueError:
            raise ConfigError(f"schedule refers to unknown current {name!r} of neuron {i}") from None
        sch_sig.append(sig)
    sch_kind, sch_par = pack_signals(sch_sig) if sch_sig else (np.zeros(0, np.int64), np.zeros((0, 1)))

    V = np.empty((n_steps + 1, n_v))
    U = np.empty((n_steps + 1, n_v))
    W = np.empty((n_steps // w_stride + 1, n_w))
    step, comp = _plant_loop(model.arrays, n_v, x0, float(dt), n_steps, int(w_stride),
                             sig_kind, sig_par, np.asarray(sch_k, dtype=np.int64),
                             sch_kind, sch_par, V, U, W)
    if step >= 0:
        raise IntegrationError(f"plant state component {comp} became non-finite at step {step}",
                               component=int(comp), step=int(step))
    t = np.arange(n_steps + 1) * dt
    if noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(seed)
        Y = V + noise_sigma * rng.standard_normal(V.shape)
    else:
        Y = V.copy()
    return Trajectory(t=t, v=V, u=U, y=Y, w=W, dt=float(dt), w_stride=int(w_stride),
                      gate_labels=list(model.gate_labels), noise_sigma=float(noise_sigma),
                      seed=seed)


# ----------------------------------------------------------------------------
# CSV export


def trajectory_columns(traj: Trajectory, stride=None, extra=None):
    """Column names and a 2-D array for export.

    Rows are taken every ``stride`` steps (default ``w_stride``), which must
    be a multiple of ``w_stride``. ``extra`` is a list of ``(name, values)``
    with one value per exported row.
    """
    stride = traj.w_stride if stride is None else int(stride)
    if stride % traj.w_stride:
        raise ConfigError("export stride must be a multiple of the state record stride")
    idx = np.arange(0, traj.t.shape[0], stride)
    widx = idx // traj.w_stride
    n_v = traj.v.shape[1]
    names = ["t"] + [f"v_{i}" for i in range(n_v)] + [f"w_{g}" for g in traj.gate_labels]
    names += [f"u_{i}" for i in range(n_v)] + [f"y_{i}" for i in range(n_v)]
    cols = [traj.t[idx, None], traj.v[idx], traj.w[widx], traj.u[idx], traj.y[idx]]
    for name, values in extra or ():
        values = np.asarray(values, dtype=float)
        if values.shape[0] != idx.shape[0]:
            raise DimensionError(f"column {name!r} has {values.shape[0]} rows, expected {idx.shape[0]}")
        names.append(name)
        cols.append(values.reshape(idx.shape[0], 1))
    return names, np.hstack(cols)


def write_csv(path, names, data):
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.9g")


def read_csv(path):
    """Inverse of :func:`write_csv`: returns ``(names, data)``."""
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return names, data
