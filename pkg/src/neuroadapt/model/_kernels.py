"""Compiled evaluation of the regressor form Phi, a, A, b and their Jacobians.

All functions operate on a ``ModelArrays`` named tuple (see ``compiled.py``).
Two voltage vectors appear throughout: ``vloc`` holds the voltages of the rows
being modelled (one per neuron row), ``vdrive`` holds every voltage that can
drive a gate (intrinsic gates read their own neuron, synaptic gates read the
presynaptic neuron). For a full model both are the same vector.
"""
import math

import numpy as np
from numba import njit

# gate parameter table columns
RHO, KAPPA, TMIN, TMAX, ZETA, CHI, A_SYN, B_SYN = range(8)

# parameter column kinds
COL_INPUT, COL_CURRENT, COL_CURRENT_V, COL_CURRENT_ONE = range(4)


@njit(cache=True, inline="always")
def sigmoid(V, rho, kappa):
    return 1.0 / (1.0 + math.exp(-(V - rho) / kappa))


@njit(cache=True, inline="always")
def ipow(x, n):
    r = 1.0
    for _ in range(n):
        r *= x
    return r


# Per-element helpers below take scalars only: passing arrays into a call that
# LLVM does not inline costs reference-count traffic on every invocation.


@njit(cache=True, inline="always")
def gate_sigma_tau(kind, rho, kappa, tmin, tmax, zeta, chi, a, b, V):
    s = sigmoid(V, rho, kappa)
    if kind == 0:
        d = V - zeta
        tau = tmin + (tmax - tmin) * math.exp(-d * d / (chi * chi))
    else:
        tau = 1.0 / (a * s + b)
    return s, tau


@njit(cache=True)
def apply_eta_into(g_par, eta_gate, eta_field, eta, out):
    out[:, :] = g_par
    for e in range(eta_gate.shape[0]):
        j = eta_gate[e]
        f = eta_field[e]
        col = RHO if f == 0 else (KAPPA if f == 1 else (ZETA if f == 2 else CHI))
        out[j, col] = eta[e]


@njit(cache=True)
def apply_eta(g_par, eta_gate, eta_field, eta):
    """Copy of the gate table with eta-designated constants substituted."""
    out = np.empty_like(g_par)
    apply_eta_into(g_par, eta_gate, eta_field, eta, out)
    return out


@njit(cache=True)
def internal_terms(g_kind, g_src, gpar, vdrive, Adiag, b):
    """Diagonal of A(v, eta) and b(v, eta)."""
    for j in range(g_kind.shape[0]):
        V = vdrive[g_src[j]]
        s, tau = gate_sigma_tau(g_kind[j], gpar[j, RHO], gpar[j, KAPPA], gpar[j, TMIN],
                                gpar[j, TMAX], gpar[j, ZETA], gpar[j, CHI],
                                gpar[j, A_SYN], gpar[j, B_SYN], V)
        if g_kind[j] == 0:
            Adiag[j] = -1.0 / tau
            b[j] = s / tau
        else:
            Adiag[j] = -(gpar[j, A_SYN] * s + gpar[j, B_SYN])
            b[j] = gpar[j, A_SYN] * s


@njit(cache=True)
def internal_eta_jacobian(g_kind, g_src, gpar, eta_gate, eta_field, vdrive, w, out):
    """d/d eta of A(v, eta) w + b(v, eta); ``out`` is (n_w, n_eta), zeroed here."""
    out[:, :] = 0.0
    for e in range(eta_gate.shape[0]):
        j = eta_gate[e]
        f = eta_field[e]
        V = vdrive[g_src[j]]
        rho = gpar[j, RHO]
        kappa = gpar[j, KAPPA]
        s, tau = gate_sigma_tau(g_kind[j], rho, kappa, gpar[j, TMIN], gpar[j, TMAX],
                                gpar[j, ZETA], gpar[j, CHI], gpar[j, A_SYN], gpar[j, B_SYN], V)
        ds = 0.0
        dtau = 0.0
        if f <= 1:
            # 1 - s from its own exponential: the difference cancels when s is near 1
            sc = 1.0 / (1.0 + math.exp((V - rho) / kappa))
            ds = -s * sc / kappa
            if f == 1:
                ds *= (V - rho) / kappa
        else:
            d = V - gpar[j, ZETA]
            chi = gpar[j, CHI]
            E = (gpar[j, TMAX] - gpar[j, TMIN]) * math.exp(-d * d / (chi * chi))
            if f == 2:
                dtau = E * 2.0 * d / (chi * chi)
            else:
                dtau = E * 2.0 * d * d / (chi * chi * chi)
        if g_kind[j] == 0:
            out[j, e] = ds / tau - (s - w[j]) * dtau / (tau * tau)
        else:
            out[j, e] = gpar[j, A_SYN] * ds * (1.0 - w[j])


@njit(cache=True)
def gating_values(M, w, g, dgm, dgh):
    """Per current: m**p h**q and its partials in m and h (1 / 0 for absent gates)."""
    for k in range(M.k_row.shape[0]):
        gm = 1.0
        gh = 1.0
        dm = 0.0
        dh = 0.0
        if M.k_m[k] >= 0:
            m = w[M.k_m[k]]
            p = M.k_p[k]
            pm1 = ipow(m, p - 1)
            gm = pm1 * m
            dm = p * pm1
        if M.k_h[k] >= 0:
            h = w[M.k_h[k]]
            q = M.k_q[k]
            qm1 = ipow(h, q - 1)
            gh = qm1 * h
            dh = q * qm1
        g[k] = gm * gh
        dgm[k] = dm * gh
        dgh[k] = gm * dh


@njit(cache=True)
def regressor_g(M, vloc, g, u, Phi, a):
    """Fill Phi (n_v, n_theta) and a (n_v) from precomputed gating products."""
    Phi[:, :] = 0.0
    for c in range(M.col_row.shape[0]):
        r = M.col_row[c]
        kind = M.col_kind[c]
        sc = M.col_scale[c]
        if kind == COL_INPUT:
            Phi[r, c] = u[r] * sc
        else:
            k = M.col_cur[c]
            if kind == COL_CURRENT:
                Phi[r, c] = -g[k] * (vloc[r] - M.k_nu[k]) * sc
            elif kind == COL_CURRENT_V:
                Phi[r, c] = -g[k] * vloc[r] * sc
            else:
                Phi[r, c] = g[k] * sc
    for r in range(a.shape[0]):
        a[r] = 0.0 if M.u_cov[r] else u[r] / M.c[r]
    for k in range(M.k_row.shape[0]):
        if not M.k_cov[k]:
            r = M.k_row[k]
            a[r] -= M.k_mu[k] * g[k] * (vloc[r] - M.k_nu[k]) / M.c[r]


@njit(cache=True)
def output_jacobian_w_g(M, vloc, dgm, dgh, theta, Jw):
    """d/dw of Phi(v, w, u) theta + a(v, w, u); ``Jw`` is (n_v, n_w)."""
    Jw[:, :] = 0.0
    for c in range(M.col_row.shape[0]):
        kind = M.col_kind[c]
        if kind == COL_INPUT:
            continue
        r = M.col_row[c]
        k = M.col_cur[c]
        if kind == COL_CURRENT:
            f = -(vloc[r] - M.k_nu[k]) * M.col_scale[c] * theta[c]
        elif kind == COL_CURRENT_V:
            f = -vloc[r] * M.col_scale[c] * theta[c]
        else:
            f = M.col_scale[c] * theta[c]
        if M.k_m[k] >= 0:
            Jw[r, M.k_m[k]] += f * dgm[k]
        if M.k_h[k] >= 0:
            Jw[r, M.k_h[k]] += f * dgh[k]
    for k in range(M.k_row.shape[0]):
        if M.k_cov[k]:
            continue
        r = M.k_row[k]
        f = -M.k_mu[k] * (vloc[r] - M.k_nu[k]) / M.c[r]
        if M.k_m[k] >= 0:
            Jw[r, M.k_m[k]] += f * dgm[k]
        if M.k_h[k] >= 0:
            Jw[r, M.k_h[k]] += f * dgh[k]


@njit(cache=True)
def output_jacobian_v_g(M, g, theta, Jv):
    """Diagonal of d/dv of Phi theta + a (rows only depend on their own v)."""
    Jv[:] = 0.0
    for c in range(M.col_row.shape[0]):
        kind = M.col_kind[c]
        if kind == COL_CURRENT or kind == COL_CURRENT_V:
            Jv[M.col_row[c]] -= g[M.col_cur[c]] * M.col_scale[c] * theta[c]
    for k in range(M.k_row.shape[0]):
        if not M.k_cov[k]:
            r = M.k_row[k]
            Jv[r] -= M.k_mu[k] * g[k] / M.c[r]


# allocating conveniences for non-hot callers


@njit(cache=True)
def regressor(M, vloc, w, u, Phi, a):
    n = M.k_row.shape[0]
    g = np.empty(n)
    gating_values(M, w, g, np.empty(n), np.empty(n))
    regressor_g(M, vloc, g, u, Phi, a)


@njit(cache=True)
def output_jacobian_w(M, vloc, w, theta, Jw):
    n = M.k_row.shape[0]
    dgm = np.empty(n)
    dgh = np.empty(n)
    gating_values(M, w, np.empty(n), dgm, dgh)
    output_jacobian_w_g(M, vloc, dgm, dgh, theta, Jw)


@njit(cache=True)
def output_jacobian_v(M, w, theta, Jv):
    n = M.k_row.shape[0]
    g = np.empty(n)
    gating_values(M, w, g, np.empty(n), np.empty(n))
    output_jacobian_v_g(M, g, theta, Jv)


# ----------------------------------------------------------------------------
# smooth saturation: identity on [lo, hi], cubic roll-off over 1.5*margin,
# constant lo - margin / hi + margin beyond


@njit(cache=True, inline="always")
def sat_scalar(x, lo, hi, m):
    if x > hi:
        W = 1.5 * m
        d = x - hi
        if d >= W:
            return hi + m
        return hi + d - d * d * d / (3.0 * W * W)
    if x < lo:
        W = 1.5 * m
        d = lo - x
        if d >= W:
            return lo - m
        return lo - d + d * d * d / (3.0 * W * W)
    return x


@njit(cache=True, inline="always")
def sat_deriv(x, lo, hi, m):
    if x > hi:
        W = 1.5 * m
        d = x - hi
        if d >= W:
            return 0.0
        return 1.0 - d * d / (W * W)
    if x < lo:
        W = 1.5 * m
        d = lo - x
        if d >= W:
            return 0.0
        return 1.0 - d * d / (W * W)
    return 1.0


@njit(cache=True)
def sat_vec(x, lo, hi, m, out):
    for i in range(x.shape[0]):
        out[i] = sat_scalar(x[i], lo[i], hi[i], m[i])


@njit(cache=True)
def sat_vec_deriv(x, lo, hi, m, out):
    for i in range(x.shape[0]):
        out[i] = sat_deriv(x[i], lo[i], hi[i], m[i])
