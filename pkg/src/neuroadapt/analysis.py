"""Post-hoc checks along simulated trajectories.

Excitation Gramians, covariance bounds, contraction rates, metric bounds
and convergence-rate fits. Everything here is a pure function of recorded
arrays; nothing integrates.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, InfeasibleRateError, NotPersistentlyExcitingError
from .model.spec import as_network

# ----------------------------------------------------------------------------
# spikes


def spike_times(t, v, threshold=0.0, refractory=1.0):
    """Upward crossings of ``threshold`` (mV); crossings within ``refractory`` ms are merged."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise DimensionError("t and v must be 1-D arrays of equal length")
    idx = np.flatnonzero((v[:-1] < threshold) & (v[1:] >= threshold))
    # linear interpolation of the crossing instant
    frac = (threshold - v[idx]) / (v[idx + 1] - v[idx])
    times = t[idx] + frac * (t[idx + 1] - t[idx])
    out = []
    for s in times:
        if not out or s - out[-1] >= refractory:
            out.append(s)
    return np.array(out)


def count_spikes(t, v, threshold=0.0, refractory=1.0):
    return int(spike_times(t, v, threshold, refractory).size)


# ----------------------------------------------------------------------------
# persistent excitation


@dataclass
class PeReport:
    window_T: float
    window_starts: np.ndarray
    min_eigs: np.ndarray
    delta: float
    threshold: float
    is_pe: bool

    def to_dict(self):
        return {"window_T_ms": self.window_T, "delta": self.delta, "threshold": self.threshold,
                "is_pe": self.is_pe, "n_windows": int(self.window_starts.size),
                "min_eig_median": float(np.median(self.min_eigs)) if self.min_eigs.size else None}


def _as_regressor(psi):
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None, None]
    elif psi.ndim == 2:
        psi = psi[:, None, :]
    if psi.ndim != 3:
        raise DimensionError("regressor trajectory must be (n_t,), (n_t, n_p) or (n_t, n_v, n_p)")
    return psi


def cumulative_gramian(psi, dt):
    """Trapezoidal running integral of ``Psi^T Psi``; shape (n_t, n_p, n_p)."""
    psi = _as_regressor(psi)
    G = np.einsum("tvi,tvj->tij", psi, psi)
    out = np.zeros_like(G)
    out[1:] = np.cumsum(0.5 * dt * (G[1:] + G[:-1]), axis=0)
    return out


def pe_gramian(psi, dt, window_T, stride=None, threshold_rel=1e-6):
    """Sliding-window excitation Gramians ``int_t^{t+T} Psi^T Psi``.

    ``psi`` is sampled every ``dt`` ms. Windows start every ``stride`` ms
    (default ``window_T / 10``). The verdict uses the scale-free cutoff
    ``threshold_rel * T * mean ||Psi||_F^2``.
    """
    psi = _as_regressor(psi)
    n_t = psi.shape[0]
    w = int(round(window_T / dt))
    if w < 1 or w > n_t - 1:
        raise ValueError(f"window of {window_T} ms does not fit a trajectory of "
                         f"{(n_t - 1) * dt} ms")
    step = max(1, int(round((window_T / 10.0 if stride is None else stride) / dt)))
    C = cumulative_gramian(psi, dt)
    starts = np.arange(0, n_t - w, step)
    mins = np.array([np.linalg.eigvalsh(C[s + w] - C[s])[0] for s in starts])
    delta = max(float(mins.min()), 0.0)
    threshold = threshold_rel * window_T * float(np.mean(np.sum(psi ** 2, axis=(1, 2))))
    return PeReport(float(window_T), starts * dt, mins, delta, threshold,
                    bool(delta > threshold and threshold > 0))


# ----------------------------------------------------------------------------
# covariance bounds


def theoretical_p_bounds(alpha, beta, gamma, delta, window_T, phi_bar, p0):
    """Closed-form ``(p_lo, p_hi)`` bracketing ``P(t)`` for ``t >= T``.

    ``phi_bar`` bounds the regressor norm (``sup ||Phi||`` without inflation,
    the ``Psi_v`` bound when ``beta > 0``). ``p0`` is ``P(0)`` as a scalar
    multiple of the identity or a matrix. ``gamma`` does not enter.
    """
    if not delta > 0:
        raise NotPersistentlyExcitingError("excitation level delta must be > 0", min_eig=delta)
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p0_inv_norm = 1.0 / float(np.linalg.eigvalsh(p0).min()) if p0.size > 1 else 1.0 / float(p0[0, 0])
    p_lo = 1.0 / (p0_inv_norm + phi_bar ** 2 / alpha)
    grow = np.exp(2.0 * alpha * window_T)
    p_hi = grow / delta
    if beta > 0:
        p_hi *= 1.0 + beta * grow * phi_bar ** 4 / (delta * alpha ** 3)
    return float(p_lo), float(p_hi)


@dataclass
class PBoundsReport:
    p_lo: float
    p_hi: float
    empirical_min: float
    empirical_max: float
    passed: bool
    first_violation_t: float | None = None
    margin_lo: float = field(init=False)
    margin_hi: float = field(init=False)

    def __post_init__(self):
        self.margin_lo = self.empirical_min - self.p_lo
        self.margin_hi = self.p_hi - self.empirical_max

    def to_dict(self):
        return asdict(self)


def verify_p_bounds(t, P, bounds, window_T):
    """Check ``p_lo I <= P(t) <= p_hi I`` for ``t >= window_T``."""
    t = np.asarray(t, dtype=float)
    P = np.asarray(P, dtype=float)
    if P.ndim != 3 or P.shape[0] != t.shape[0]:
        raise DimensionError("P must be (n_t, n, n) aligned with t")
    p_lo, p_hi = bounds
    sel = t >= window_T
    if not sel.any():
        raise ValueError("trajectory ends before the window length")
    eig = np.linalg.eigvalsh(P[sel])
    lo, hi = eig[:, 0], eig[:, -1]
    bad = (lo < p_lo) | (hi > p_hi)
    first = float(t[sel][np.argmax(bad)]) if bad.any() else None
    return PBoundsReport(float(p_lo), float(p_hi), float(lo.min()), float(hi.max()),
                         not bool(bad.any()), first)


def min_eig_trajectory(P):
    return np.linalg.eigvalsh(np.asarray(P, dtype=float))[:, 0]


# ----------------------------------------------------------------------------
# contraction


@dataclass
class ContractionReport:
    lambda_w: float
    rates: np.ndarray
    labels: list
    lambda_v: float | None = None
    m_lo: float | None = None
    m_hi: float | None = None
    epsilon: float | None = None

    def to_dict(self):
        return {"lambda_w": self.lambda_w, "rates": dict(zip(self.labels, map(float, self.rates))),
                "lambda_v": self.lambda_v, "m_lo": self.m_lo, "m_hi": self.m_hi,
                "epsilon": self.epsilon}


def internal_contraction_rate(spec):
    """Per-gate rates ``2 / tau_max`` (intrinsic) and ``2 b`` (synaptic), and their minimum.

    With the identity metric the gate dynamics ``dw/dt = (sigma(v) - w) / tau(v)``
    contract at ``2 / tau(v) >= 2 / tau_max``; a synaptic gate has
    ``1 / tau = a sigma(v) + b >= b``.
    """
    spec = as_network(spec)
    rates, labels = [], []
    for i, nrn in enumerate(spec.neurons):
        prefix = f"n{i}." if spec.n_v > 1 else ""
        for cur in nrn.currents:
            for gate, kin in (("m", cur.m), ("h", cur.h)):
                if kin is not None and (cur.p if gate == "m" else cur.q) > 0:
                    rates.append(2.0 / kin.tau_max)
                    labels.append(f"{prefix}{gate}_{cur.name}")
        for syn in nrn.synapses:
            rates.append(2.0 * syn.kinetics.b)
            labels.append(f"{prefix}s_{syn.name}{syn.pre}")
    rates = np.array(rates)
    return ContractionReport(float(rates.min()) if rates.size else np.inf, rates, labels)


def output_contraction_margin(model, theta=None):
    """``lambda_v = -2 max eig`` of the voltage Jacobian over the gate box corners.

    Uses the identity metric on ``v``. The Jacobian is diagonal with entries
    ``-sum_k theta-weighted conductances``; its maximum over ``w in [0, 1]``
    is attained at a corner because each gating product is monotone in each gate.
    """
    theta = model.theta_true if theta is None else np.asarray(theta, dtype=float)
    worst = -np.inf
    for corner in itertools.product((0.0, 1.0), repeat=model.n_w):
        J = model.jac_v(np.zeros(model.n_v), np.array(corner), theta)
        worst = max(worst, float(np.max(np.diag(J))))
    return -2.0 * worst


def sup_jacobian_norm(model, v, w, u, theta):
    """Max spectral norm of ``d/dw (Phi theta + a)`` over recorded samples."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    best = 0.0
    for k in range(v.shape[0]):
        J = model.jac_w(v[k], w[k], theta)
        best = max(best, float(np.linalg.norm(J, 2)))
    return best


def epsilon_formula(lambda_target, lambda_w, gamma, M_w, sup_jacobian_norm, zeta=None):
    """``(1 - zeta)^2 (lambda_w - lambda)(gamma - lambda) lambda_min[M_w] / sup||J||^2``."""
    if not lambda_target < min(lambda_w, gamma):
        raise InfeasibleRateError(f"rate {lambda_target} must be below min(lambda_w, gamma) = "
                                  f"{min(lambda_w, gamma)}")
    if not sup_jacobian_norm > 0:
        raise ValueError("sup_jacobian_norm must be > 0")
    M_w = np.atleast_2d(np.asarray(M_w, dtype=float))
    eps = ((lambda_w - lambda_target) * (gamma - lambda_target)
           * float(np.linalg.eigvalsh(M_w).min()) / sup_jacobian_norm ** 2)
    if zeta is not None:
        if not 0.0 <= zeta < 1.0:
            raise ValueError("zeta must lie in [0, 1)")
        eps *= (1.0 - zeta) ** 2
    return eps


def assemble_metric(psi_v, P, gamma, epsilon, M_w, psi_w=None):
    """``M = T^T Mbar T`` for one sample; ``T`` carries ``-Psi / gamma`` above the parameter block."""
    psi_v = np.atleast_2d(np.asarray(psi_v, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    M_w = np.atleast_2d(np.asarray(M_w, dtype=float))
    n_v, n_p = psi_v.shape
    n_w = M_w.shape[0]
    psi_w = np.zeros((n_w, n_p)) if psi_w is None else np.atleast_2d(psi_w)
    n_x = n_v + n_w
    T = np.eye(n_x + n_p)
    T[:n_v, n_x:] = -psi_v / gamma
    T[n_v:n_x, n_x:] = -psi_w / gamma
    Mbar = np.zeros_like(T)
    Mbar[:n_v, :n_v] = epsilon * np.eye(n_v)
    Mbar[n_v:n_x, n_v:n_x] = M_w
    Mbar[n_x:, n_x:] = epsilon * np.linalg.inv(gamma * P)
    return T.T @ Mbar @ T


def metric_eigen_bounds(psi_v, P, gamma, epsilon, M_w, psi_w=None):
    """Infimum and supremum over samples of the eigenvalues of the contraction metric."""
    psi_v = np.asarray(psi_v, dtype=float)
    P = np.asarray(P, dtype=float)
    if P.ndim == 2:
        psi_v, P = psi_v[None], P[None]
        psi_w = None if psi_w is None else np.asarray(psi_w)[None]
    lo, hi = np.inf, -np.inf
    for k in range(P.shape[0]):
        eig = np.linalg.eigvalsh(assemble_metric(psi_v[k], P[k], gamma, epsilon, M_w,
                                                 None if psi_w is None else psi_w[k]))
        lo = min(lo, float(eig[0]))
        hi = max(hi, float(eig[-1]))
    return lo, hi


# ----------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    rate: float
    r2: float
    window: tuple

    def to_dict(self):
        return {"rate": self.rate, "r2": self.r2, "window_ms": list(self.window)}


def convergence_rate_fit(t, err, window=None):
    """Least-squares slope of ``-log ||err||`` over ``window = (t0, t1)`` (default: whole record)."""
    t = np.asarray(t, dtype=float)
    e = np.asarray(err, dtype=float)
    if e.ndim > 1:
        e = np.linalg.norm(e.reshape(e.shape[0], -1), axis=1)
    if t.shape != e.shape:
        raise DimensionError("t and err must align")
    t0, t1 = (t[0], t[-1]) if window is None else window
    sel = (t >= t0) & (t <= t1)
    if sel.sum() < 2:
        raise ValueError("fit window holds fewer than two samples")
    x = t[sel]
    y = np.log(np.clip(e[sel], 1e-300, None))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(-coef[0]), r2, (float(t0), float(t1)))


# ----------------------------------------------------------------------------
# report


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def diagnostics_report(pe=None, p_bounds=None, contraction=None, rate_fit=None, extra=None):
    """Assemble the JSON-ready diagnostics dictionary."""
    out = {
        "pe": pe.to_dict() if pe is not None else None,
        "p_bounds": p_bounds.to_dict() if p_bounds is not None else None,
        "contraction": contraction.to_dict() if contraction is not None else None,
        "rate_fit": rate_fit.to_dict() if rate_fit is not None else None,
    }
    if extra:
        out.update(extra)
    return _jsonable(out)


def write_report(path, report):
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
