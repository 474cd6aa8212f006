"""Compiled right-hand sides and RK4 loops for the observers.

Flat state layouts (row-major matrices):

* reduced:   [w_hat]
* rls:       [v_hat | w_hat | theta_hat | Psi (n_v x n_th) | P (n_th x n_th)]
* augmented: [v_hat | w_hat | theta_hat | eta_hat | Psi_v (n_v x n_p) |
              Psi_w (n_w x n_p) | P (n_p x n_p)],  n_p = n_th + n_eta

The output-error variant uses the augmented layout.
"""
import numpy as np
from numba import njit

from ..model import _kernels as K

REDUCED, RLS, AUGMENTED, OUTPUT_ERROR = range(4)

# hold modes for the sampled measurement inside a step
ZOH, LINEAR = range(2)


def state_size(mode, n_v, n_w, n_th, n_eta):
    if mode == REDUCED:
        return n_w
    if mode == RLS:
        return n_v + n_w + n_th + n_v * n_th + n_th * n_th
    n_p = n_th + n_eta
    return n_v + n_w + n_p + n_v * n_p + n_w * n_p + n_p * n_p


@njit(cache=True)
def make_work(M, n_drive):
    n_v = M.c.shape[0]
    n_w = M.g_kind.shape[0]
    n_th = M.col_row.shape[0]
    n_eta = M.eta_gate.shape[0]
    n_p = n_th + n_eta
    n_k = M.k_row.shape[0]
    return (np.empty(n_w), np.empty(n_w), np.empty(n_th), np.empty(n_v), np.empty(n_v),
            np.empty((n_v, n_th)), np.empty(n_v), np.empty((n_w, 8)), np.empty(n_w),
            np.empty(n_w), np.empty(n_w), np.empty(n_drive), np.empty((n_p, n_v)),
            np.empty(n_p), np.empty((n_v, n_w)), np.empty(n_v), np.empty((n_w, max(n_eta, 1))),
            np.empty(n_k), np.empty(n_k), np.empty(n_k), np.empty(n_w))


@njit(cache=True)
def reduced_rhs(M, yd, x, dx, work):
    Ad, b = work[8], work[9]
    K.internal_terms(M.g_kind, M.g_src, M.g_par, yd, Ad, b)
    for j in range(x.shape[0]):
        dx[j] = Ad[j] * x[j] + b[j]


@njit(cache=True)
def rls_rhs(M, hyp, yd, u, x, dx, work):
    alpha = hyp[0]
    gamma = hyp[2]
    n_v = M.c.shape[0]
    n_w = M.g_kind.shape[0]
    n_th = M.col_row.shape[0]
    yloc, e, Phi, a = work[3], work[4], work[5], work[6]
    Ad, b, Kg, Ke = work[8], work[9], work[12], work[13]
    g, dgm, dgh = work[17], work[18], work[19]
    o_w = n_v
    o_th = o_w + n_w
    o_ps = o_th + n_th
    o_p = o_ps + n_v * n_th
    vh = x[:n_v]
    wh = x[o_w:o_th]
    th = x[o_th:o_ps]
    Psi = x[o_ps:o_p].reshape((n_v, n_th))
    P = x[o_p:].reshape((n_th, n_th))
    for r in range(n_v):
        yloc[r] = yd[M.row_drive[r]]
        e[r] = yloc[r] - vh[r]
    K.gating_values(M, wh, g, dgm, dgh)
    K.regressor_g(M, yloc, g, u, Phi, a)
    K.internal_terms(M.g_kind, M.g_src, M.g_par, yd, Ad, b)
    # K = P Psi^T, Ke = K e
    for i in range(n_th):
        s = 0.0
        for r in range(n_v):
            acc = 0.0
            for j in range(n_th):
                acc += P[i, j] * Psi[r, j]
            Kg[i, r] = acc
            s += acc * e[r]
        Ke[i] = s
    for r in range(n_v):
        acc = a[r] + gamma * e[r]
        for j in range(n_th):
            acc += Phi[r, j] * th[j]
        for j in range(n_th):
            acc += Psi[r, j] * Ke[j]
        dx[r] = acc
    for j in range(n_w):
        dx[o_w + j] = Ad[j] * wh[j] + b[j]
    for i in range(n_th):
        dx[o_th + i] = gamma * Ke[i]
    for r in range(n_v):
        for j in range(n_th):
            # same operation order as the augmented kernel, so the two agree bitwise
            dx[o_ps + r * n_th + j] = -gamma * Psi[r, j] + gamma * Phi[r, j]
    for i in range(n_th):
        for j in range(n_th):
            acc = alpha * P[i, j]
            for r in range(n_v):
                acc -= Kg[i, r] * Kg[j, r]
            dx[o_p + i * n_th + j] = acc


@njit(cache=True)
def aug_rhs(M, mode, hyp, sat_w, sat_th, yd, u, x, dx, work):
    alpha = hyp[0]
    beta = hyp[1]
    gamma = hyp[2]
    n_v = M.c.shape[0]
    n_w = M.g_kind.shape[0]
    n_th = M.col_row.shape[0]
    n_eta = M.eta_gate.shape[0]
    n_p = n_th + n_eta
    (wsat, dwsat, thsat, yloc, e, Phi, a, gpar, Ad, b, Ad2, vd2, Kg, Ke, Jw, Jv, Jeta,
     g, dgm, dgh, b2) = work
    o_w = n_v
    o_th = o_w + n_w
    o_eta = o_th + n_th
    o_pv = o_eta + n_eta
    o_pw = o_pv + n_v * n_p
    o_p = o_pw + n_w * n_p
    vh = x[:n_v]
    wh = x[o_w:o_th]
    th = x[o_th:o_eta]
    eh = x[o_eta:o_pv]
    Psv = x[o_pv:o_pw].reshape((n_v, n_p))
    Psw = x[o_pw:o_p].reshape((n_w, n_p))
    P = x[o_p:].reshape((n_p, n_p))

    for j in range(n_w):
        wsat[j] = K.sat_scalar(wh[j], sat_w[0, j], sat_w[1, j], sat_w[2, j])
        dwsat[j] = K.sat_deriv(wh[j], sat_w[0, j], sat_w[1, j], sat_w[2, j])
    for i in range(n_th):
        thsat[i] = K.sat_scalar(th[i], sat_th[0, i], sat_th[1, i], sat_th[2, i])
    for r in range(n_v):
        yloc[r] = yd[M.row_drive[r]]
        e[r] = yloc[r] - vh[r]
    vl = yloc if mode == AUGMENTED else vh

    K.gating_values(M, wsat, g, dgm, dgh)
    K.regressor_g(M, vl, g, u, Phi, a)
    K.output_jacobian_w_g(M, vl, dgm, dgh, thsat, Jw)
    K.apply_eta_into(M.g_par, M.eta_gate, M.eta_field, eh, gpar)
    K.internal_terms(M.g_kind, M.g_src, gpar, yd, Ad, b)
    K.internal_eta_jacobian(M.g_kind, M.g_src, gpar, M.eta_gate, M.eta_field, yd, wsat, Jeta)
    if mode == OUTPUT_ERROR:
        K.output_jacobian_v_g(M, g, thsat, Jv)
        for i in range(yd.shape[0]):
            vd2[i] = yd[i]
        for r in range(n_v):
            vd2[M.row_drive[r]] = vh[r]
        K.internal_terms(M.g_kind, M.g_src, gpar, vd2, Ad2, b2)
    else:
        for j in range(n_w):
            Ad2[j] = Ad[j]

    for i in range(n_p):
        s = 0.0
        for r in range(n_v):
            acc = 0.0
            for j in range(n_p):
                acc += P[i, j] * Psv[r, j]
            Kg[i, r] = acc
            s += acc * e[r]
        Ke[i] = s

    for r in range(n_v):
        acc = a[r] + gamma * e[r]
        for j in range(n_th):
            acc += Phi[r, j] * th[j]
        for j in range(n_p):
            acc += Psv[r, j] * Ke[j]
        dx[r] = acc
    for q in range(n_w):
        acc = Ad[q] * wh[q] + b[q]
        for j in range(n_p):
            acc += Psw[q, j] * Ke[j]
        dx[o_w + q] = acc
    for i in range(n_p):
        dx[o_th + i] = gamma * Ke[i]
    # Psi_v' = (-gamma + Jv) Psi_v + Jw diag(sat_w') Psi_w + gamma [Phi, 0]
    for r in range(n_v):
        diag = -gamma
        if mode == OUTPUT_ERROR:
            diag += Jv[r]
        for j in range(n_p):
            acc = diag * Psv[r, j]
            for q in range(n_w):
                acc += Jw[r, q] * dwsat[q] * Psw[q, j]
            if j < n_th:
                acc += gamma * Phi[r, j]
            dx[o_pv + r * n_p + j] = acc
    # Psi_w' = A Psi_w + gamma [0, d_eta(A sat(w) + b)]
    for q in range(n_w):
        for j in range(n_p):
            acc = Ad2[q] * Psw[q, j]
            if j >= n_th:
                acc += gamma * Jeta[q, j - n_th]
            dx[o_pw + q * n_p + j] = acc
    for i in range(n_p):
        for j in range(n_p):
            acc = alpha * P[i, j]
            if i == j:
                acc += beta
            for r in range(n_v):
                acc -= Kg[i, r] * Kg[j, r]
            dx[o_p + i * n_p + j] = acc


@njit(cache=True)
def _rhs(M, mode, hyp, sat_w, sat_th, yd, u, x, dx, work):
    if mode == REDUCED:
        reduced_rhs(M, yd, x, dx, work)
    elif mode == RLS:
        rls_rhs(M, hyp, yd, u, x, dx, work)
    else:
        aug_rhs(M, mode, hyp, sat_w, sat_th, yd, u, x, dx, work)


@njit(cache=True)
def _chol_ok(P, n, floor, L):
    """True iff P - floor I admits a Cholesky factorisation."""
    for i in range(n):
        for j in range(i + 1):
            s = P[i, j]
            if i == j:
                s -= floor
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if not s > 0.0:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return True


@njit(cache=True)
def _stiffness(x, psi_off, p_off, n_v, n_p, gamma):
    """Largest decay rate of the Riccati and injection terms, ``max(2 s, gamma (1 + s))``.

    ``s = trace(Psi_v P Psi_v^T)`` bounds the eigenvalues of the regressor
    projected through ``P``.
    """
    s = 0.0
    for r in range(n_v):
        for i in range(n_p):
            acc = 0.0
            for j in range(n_p):
                acc += x[p_off + i * n_p + j] * x[psi_off + r * n_p + j]
            s += acc * x[psi_off + r * n_p + i]
    return max(2.0 * s, gamma * (1.0 + s))


@njit(cache=True)
def _rk4(M, mode, hyp, sat_w, sat_th, y0, ym, y1, u0, um, u1, x, h, xs, k1, k2, k3, k4, work):
    n = x.shape[0]
    _rhs(M, mode, hyp, sat_w, sat_th, y0, u0, x, k1, work)
    for i in range(n):
        xs[i] = x[i] + 0.5 * h * k1[i]
    _rhs(M, mode, hyp, sat_w, sat_th, ym, um, xs, k2, work)
    for i in range(n):
        xs[i] = x[i] + 0.5 * h * k2[i]
    _rhs(M, mode, hyp, sat_w, sat_th, ym, um, xs, k3, work)
    for i in range(n):
        xs[i] = x[i] + h * k3[i]
    _rhs(M, mode, hyp, sat_w, sat_th, y1, u1, xs, k4, work)
    for i in range(n):
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def _mid(a, b, out):
    for i in range(a.shape[0]):
        out[i] = 0.5 * (a[i] + b[i])


@njit(cache=True)
def _blend(a, b, f, out):
    for i in range(a.shape[0]):
        out[i] = a[i] + f * (b[i] - a[i])


@njit(cache=True)
def run(M, mode, hyp, sat_w, sat_th, Y, U, x0, dt, hold, stride, p_offset, n_p, p_floor, out, xf,
        psi_offset=-1, step_limit=0.0, max_substeps=1):
    """Integrate an observer over sampled inputs.

    ``Y`` (n_t, n_drive) and ``U`` (n_t, n_v) are samples on the grid; the
    state is recorded into ``out`` every ``stride`` steps and the last state
    is left in ``xf``. A step whose stiffness estimate times ``dt`` exceeds
    ``step_limit`` is split into up to ``max_substeps`` equal RK4 substeps
    (the held measurement is interpolated inside them). Returns
    ``(status, step, component)`` with status 0 ok, 1 non-finite state,
    2 loss of positive definiteness of P.
    """
    n_t = Y.shape[0]
    n = x0.shape[0]
    n_drive = Y.shape[1]
    n_v = U.shape[1]
    gamma = hyp[2] if hyp.shape[0] > 2 else 0.0
    work = make_work(M, n_drive)
    x = x0.copy()
    xs = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    ya = np.empty(n_drive)
    ym = np.empty(n_drive)
    yb = np.empty(n_drive)
    ua = np.empty(n_v)
    um = np.empty(n_v)
    ub = np.empty(n_v)
    L = np.empty((max(n_p, 1), max(n_p, 1)))
    out[0, :] = x
    for s in range(n_t - 1):
        y0 = Y[s]
        u0 = U[s]
        y1 = Y[s + 1] if hold == LINEAR else y0
        u1 = U[s + 1] if hold == LINEAR else u0
        k = 1
        if step_limit > 0.0 and psi_offset >= 0 and n_p > 0:
            stiff = _stiffness(x, psi_offset, p_offset, n_v, n_p, gamma)
            if stiff * dt > step_limit:
                k = min(max_substeps, int(np.ceil(stiff * dt / step_limit)))
        if k == 1:
            _mid(y0, y1, ym)
            _mid(u0, u1, um)
            _rk4(M, mode, hyp, sat_w, sat_th, y0, ym, y1, u0, um, u1, x, dt,
                 xs, k1, k2, k3, k4, work)
        else:
            h = dt / k
            for j in range(k):
                f0 = j / k
                _blend(y0, y1, f0, ya)
                _blend(y0, y1, f0 + 0.5 / k, ym)
                _blend(y0, y1, (j + 1.0) / k, yb)
                _blend(u0, u1, f0, ua)
                _blend(u0, u1, f0 + 0.5 / k, um)
                _blend(u0, u1, (j + 1.0) / k, ub)
                _rk4(M, mode, hyp, sat_w, sat_th, ya, ym, yb, ua, um, ub, x, h,
                     xs, k1, k2, k3, k4, work)
        for i in range(n):
            if not np.isfinite(x[i]):
                xf[:] = x
                return 1, s + 1, i
        if n_p > 0:
            P = x[p_offset:p_offset + n_p * n_p].reshape((n_p, n_p))
            for i in range(n_p):
                for j in range(i + 1, n_p):
                    m = 0.5 * (P[i, j] + P[j, i])
                    P[i, j] = m
                    P[j, i] = m
            if not _chol_ok(P, n_p, p_floor, L):
                xf[:] = x
                return 2, s + 1, -1
        if (s + 1) % stride == 0:
            out[(s + 1) // stride, :] = x
    xf[:] = x
    return 0, -1, -1
