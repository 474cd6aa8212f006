"""Flatten a NetworkSpec + Parametrization into arrays for the compiled kernels."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import ConfigError, DimensionError
from . import _kernels as K
from .spec import GATE_FIELDS, SYNAPTIC_GATE_FIELDS, NetworkSpec, Parametrization, as_network


class ModelArrays(NamedTuple):
    c: np.ndarray          # (n_v,) capacitance per local row
    row_drive: np.ndarray  # (n_v,) index of each local row in the drive vector
    g_kind: np.ndarray     # (n_w,) 0 intrinsic, 1 synaptic
    g_src: np.ndarray      # (n_w,) drive-vector index of the gating voltage
    g_par: np.ndarray      # (n_w, 8) rho, kappa, tau_min, tau_max, zeta, chi, a, b
    k_row: np.ndarray      # currents: local row
    k_mu: np.ndarray
    k_nu: np.ndarray
    k_m: np.ndarray        # gate index or -1
    k_p: np.ndarray
    k_h: np.ndarray
    k_q: np.ndarray
    k_cov: np.ndarray      # 1 if the current appears in Phi
    u_cov: np.ndarray      # 1 if the input appears in Phi (per row)
    col_row: np.ndarray    # theta columns
    col_kind: np.ndarray
    col_cur: np.ndarray
    col_scale: np.ndarray
    eta_gate: np.ndarray
    eta_field: np.ndarray


class CompiledModel:
    """Array form of a (sub)network under a given parametrization.

    Built by :func:`compile_model`. ``neurons`` restricts the modelled rows to
    a subset of the network (used by the decoupled network observer); gates of
    those neurons still read presynaptic voltages from the full drive vector.
    """

    def __init__(self, arrays, *, n_drive, theta_labels, eta_labels, gate_labels,
                 current_keys, theta_true, eta_true, layout, spec, par, neurons):
        self.arrays = arrays
        self.n_drive = n_drive
        self.theta_labels = theta_labels
        self.eta_labels = eta_labels
        self.gate_labels = gate_labels
        self.current_keys = current_keys
        self.theta_true = theta_true
        self.eta_true = eta_true
        self.layout = layout
        self.spec = spec
        self.par = par
        self.neurons = neurons

    n_v = property(lambda self: self.arrays.c.shape[0])
    n_w = property(lambda self: self.arrays.g_kind.shape[0])
    n_theta = property(lambda self: self.arrays.col_row.shape[0])
    n_eta = property(lambda self: self.arrays.eta_gate.shape[0])

    def __repr__(self):
        return (f"CompiledModel(n_v={self.n_v}, n_w={self.n_w}, n_theta={self.n_theta}, "
                f"n_eta={self.n_eta}, layout={self.layout!r})")

    # -- shape checking -----------------------------------------------------
    def _vec(self, x, n, name):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (n,):
            raise DimensionError(f"{name}: expected shape ({n},), got {x.shape}")
        return np.ascontiguousarray(x)

    def _eta(self, eta):
        if eta is None:
            return self.eta_true.copy()
        return self._vec(eta, self.n_eta, "eta")

    # -- evaluations --------------------------------------------------------
    def phi_a(self, v, w, u):
        v = self._vec(v, self.n_v, "v")
        w = self._vec(w, self.n_w, "w")
        u = self._vec(np.broadcast_to(np.asarray(u, dtype=float), (self.n_v,)), self.n_v, "u")
        Phi = np.empty((self.n_v, self.n_theta))
        a = np.empty(self.n_v)
        K.regressor(self.arrays, v, w, u, Phi, a)
        return Phi, a

    def internal(self, vdrive, eta=None):
        vdrive = self._vec(vdrive, self.n_drive, "vdrive")
        gpar = K.apply_eta(self.arrays.g_par, self.arrays.eta_gate, self.arrays.eta_field,
                           self._eta(eta))
        Ad = np.empty(self.n_w)
        b = np.empty(self.n_w)
        K.internal_terms(self.arrays.g_kind, self.arrays.g_src, gpar, vdrive, Ad, b)
        return np.diag(Ad), b

    def jac_w(self, v, w, theta):
        v = self._vec(v, self.n_v, "v")
        w = self._vec(w, self.n_w, "w")
        theta = self._vec(theta, self.n_theta, "theta")
        J = np.empty((self.n_v, self.n_w))
        K.output_jacobian_w(self.arrays, v, w, theta, J)
        return J

    def jac_v(self, v, w, theta):
        self._vec(v, self.n_v, "v")
        w = self._vec(w, self.n_w, "w")
        theta = self._vec(theta, self.n_theta, "theta")
        d = np.empty(self.n_v)
        K.output_jacobian_v(self.arrays, w, theta, d)
        return np.diag(d)

    def jac_eta(self, vdrive, eta, w):
        vdrive = self._vec(vdrive, self.n_drive, "vdrive")
        w = self._vec(w, self.n_w, "w")
        eta = self._eta(eta)
        gpar = K.apply_eta(self.arrays.g_par, self.arrays.eta_gate, self.arrays.eta_field, eta)
        J = np.empty((self.n_w, self.n_eta))
        K.internal_eta_jacobian(self.arrays.g_kind, self.arrays.g_src, gpar,
                                self.arrays.eta_gate, self.arrays.eta_field, vdrive, w, J)
        return J

    def theta_with(self, mu_override):
        """True theta when some maximal conductances take other values.

        ``mu_override`` maps ``(neuron, current_name)`` to a conductance.
        """
        spec = self.spec
        sub = compile_model(override_conductances(spec, mu_override), self.par,
                            neurons=self.neurons)
        return sub.theta_true


def override_conductances(spec, mu_override):
    """Copy of ``spec`` with maximal conductances replaced; keys ``(neuron, current_name)``."""
    from dataclasses import replace
    spec = as_network(spec)
    for (i, name), mu in mu_override.items():
        nrn = spec.neurons[i]
        if name == "L":
            nrn = replace(nrn, mu_leak=mu)
        else:
            cur = [replace(c, mu=mu) if c.name == name else c for c in nrn.currents]
            syn = [replace(s, mu=mu) if f"{s.name}{s.pre}" == name else s for s in nrn.synapses]
            nrn = replace(nrn, currents=tuple(cur), synapses=tuple(syn))
        spec = spec.replace_neuron(i, nrn)
    return spec


def compile_model(spec, par: Parametrization | None = None, neurons=None) -> CompiledModel:
    spec = as_network(spec)
    par = par or Parametrization()
    all_neurons = list(range(spec.n_v))
    neurons = all_neurons if neurons is None else list(neurons)
    multi = spec.n_v > 1

    # flat gate table over the whole network; kept only for selected neurons
    gate_offset, off = [], 0
    for nrn in spec.neurons:
        gate_offset.append(off)
        off += len(nrn.gate_labels())
    full_labels = spec.gate_labels()

    g_kind, g_src, g_par, gate_labels, gate_global = [], [], [], [], []
    k_row, k_mu, k_nu, k_m, k_p, k_h, k_q, k_cov, current_keys = ([] for _ in range(9))
    col_row, col_kind, col_cur, col_scale, theta_labels, theta_true = ([] for _ in range(6))
    c_arr, row_drive, u_cov = [], [], []

    all_names = set()
    for nrn in spec.neurons:
        all_names.update(nrn.current_names())
        all_names.update(syn.name for syn in nrn.synapses)
    if par.currents is not None:
        missing = set(par.currents) - all_names
        if missing:
            raise ConfigError(f"unknown current(s) in parametrization: {sorted(missing)}")

    for r, i in enumerate(neurons):
        nrn = spec.neurons[i]
        prefix = f"n{i}." if multi else ""
        local_gate0 = len(g_kind)
        jj = 0

        def add_gate(kind, par8, src):
            nonlocal jj
            g_kind.append(kind)
            g_src.append(src)
            g_par.append(par8)
            gate_global.append(gate_offset[i] + jj)
            gate_labels.append(full_labels[gate_offset[i] + jj])
            jj += 1
            return local_gate0 + jj - 1

        src_self = i  # drive indices are always network-global
        currents = []  # (name, mu, nu, m_idx, p, h_idx, q)
        base = {}  # synapse key -> synapse name, so "G" selects every G synapse
        for cur in nrn.currents:
            mi = hi = -1
            if cur.p > 0:
                mi = add_gate(0, list(cur.m.as_tuple()) + [0.0, 0.0], src_self)
            if cur.q > 0:
                hi = add_gate(0, list(cur.h.as_tuple()) + [0.0, 0.0], src_self)
            currents.append((cur.name, cur.mu, cur.nu, mi, cur.p, hi, cur.q))
        for syn in nrn.synapses:
            kin = syn.kinetics
            si = add_gate(1, [kin.rho, kin.kappa, 0.0, 0.0, 0.0, 1.0, kin.a, kin.b], syn.pre)
            currents.append((f"{syn.name}{syn.pre}", syn.mu, syn.nu, si, 1, -1, 0))
            base[f"{syn.name}{syn.pre}"] = syn.name
        currents.append(("L", nrn.mu_leak, nrn.nu_leak, -1, 0, -1, 0))

        selected = set(par.currents) if par.currents is not None else {x[0] for x in currents}
        c_arr.append(nrn.c)
        row_drive.append(src_self)
        scaled = par.layout != "conductance"
        u_cov.append(1 if scaled else 0)
        if scaled:
            col_row.append(r); col_kind.append(K.COL_INPUT); col_cur.append(-1)
            col_scale.append(1.0); theta_labels.append(prefix + "1/c"); theta_true.append(1.0 / nrn.c)
        first_k = len(k_row)
        for name, mu, nu, mi, p, hi, q in currents:
            k = len(k_row)
            k_row.append(r); k_mu.append(mu); k_nu.append(nu)
            k_m.append(mi); k_p.append(p); k_h.append(hi); k_q.append(q)
            k_cov.append(1 if (name in selected or base.get(name) in selected) else 0)
            current_keys.append((i, name))
        for k in range(first_k, len(k_row)):
            if not k_cov[k]:
                continue
            name = current_keys[k][1]
            mu = k_mu[k]
            if par.layout == "conductance":
                col_row.append(r); col_kind.append(K.COL_CURRENT); col_cur.append(k)
                col_scale.append(1.0 / nrn.c); theta_labels.append(f"{prefix}mu_{name}")
                theta_true.append(mu)
            elif par.layout == "scaled":
                col_row.append(r); col_kind.append(K.COL_CURRENT); col_cur.append(k)
                col_scale.append(1.0); theta_labels.append(f"{prefix}mu_{name}/c")
                theta_true.append(mu / nrn.c)
            else:
                col_row.append(r); col_kind.append(K.COL_CURRENT_V); col_cur.append(k)
                col_scale.append(1.0); theta_labels.append(f"{prefix}mu_{name}/c")
                theta_true.append(mu / nrn.c)
        if par.layout == "scaled_reversal":
            for k in range(first_k, len(k_row)):
                if not k_cov[k]:
                    continue
                name = current_keys[k][1]
                col_row.append(r); col_kind.append(K.COL_CURRENT_ONE); col_cur.append(k)
                col_scale.append(1.0); theta_labels.append(f"{prefix}mu_{name}*nu_{name}/c")
                theta_true.append(k_mu[k] * k_nu[k] / nrn.c)

    # eta map (labels refer to the full-network gate labels)
    eta_gate, eta_field, eta_labels, eta_true = [], [], [], []
    label_to_local = {lab: j for j, lab in enumerate(gate_labels)}
    for lab, fld in par.eta:
        if lab not in label_to_local:
            if lab in full_labels:
                continue  # belongs to a neuron outside this sub-model
            raise ConfigError(f"unknown gate {lab!r} in eta map; known: {full_labels}")
        j = label_to_local[lab]
        allowed = GATE_FIELDS if g_kind[j] == 0 else SYNAPTIC_GATE_FIELDS
        if fld not in allowed:
            raise ConfigError(f"gate {lab}: field {fld!r} not estimable (allowed {allowed})")
        fidx = GATE_FIELDS.index(fld)
        eta_gate.append(j)
        eta_field.append(fidx)
        eta_labels.append(f"{fld}_{lab}")
        col = (K.RHO, K.KAPPA, K.ZETA, K.CHI)[fidx]
        eta_true.append(g_par[j][col])

    i64 = lambda x: np.asarray(x, dtype=np.int64)
    f64 = lambda x: np.asarray(x, dtype=np.float64)
    arrays = ModelArrays(
        c=f64(c_arr), row_drive=i64(row_drive),
        g_kind=i64(g_kind), g_src=i64(g_src),
        g_par=f64(g_par).reshape(len(g_kind), 8),
        k_row=i64(k_row), k_mu=f64(k_mu), k_nu=f64(k_nu), k_m=i64(k_m), k_p=i64(k_p),
        k_h=i64(k_h), k_q=i64(k_q), k_cov=i64(k_cov), u_cov=i64(u_cov),
        col_row=i64(col_row), col_kind=i64(col_kind), col_cur=i64(col_cur),
        col_scale=f64(col_scale), eta_gate=i64(eta_gate), eta_field=i64(eta_field),
    )
    return CompiledModel(
        arrays, n_drive=spec.n_v,
        theta_labels=theta_labels, eta_labels=eta_labels, gate_labels=gate_labels,
        current_keys=current_keys, theta_true=f64(theta_true), eta_true=f64(eta_true),
        layout=par.layout, spec=spec, par=par, neurons=neurons)


def _model(spec, par):
    if isinstance(spec, CompiledModel):
        return spec
    return compile_model(spec, par)


# ----------------------------------------------------------------------------
# public operations in the regressor form


def regressor_phi(v, w, u, spec, par=None):
    """Regressor matrix Phi(v, w, u), shape (n_v, n_theta)."""
    return _model(spec, par).phi_a(v, w, u)[0]


def drift_a(v, w, u, spec, par=None):
    return _model(spec, par).phi_a(v, w, u)[1]


def internal_dynamics(v, eta, spec, par=None):
    """(A(v, eta), b(v, eta)); A is diagonal with entries -1/tau."""
    return _model(spec, par).internal(v, eta)


def jacobian_output(v, w, u, theta, spec, par=None, wrt="w"):
    """Analytic Jacobian of Phi(v, w, u) theta + a(v, w, u) w.r.t. ``v`` or ``w``.

    ``u`` does not enter either Jacobian; it is accepted for signature symmetry.
    """
    m = _model(spec, par)
    if wrt == "w":
        return m.jac_w(v, w, theta)
    if wrt == "v":
        return m.jac_v(v, w, theta)
    raise ValueError("wrt must be 'v' or 'w'")


def jacobian_internal_wrt_eta(v, eta, w_sat, spec, par=None):
    return _model(spec, par).jac_eta(v, eta, w_sat)
