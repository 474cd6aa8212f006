"""Declarative description of conductance-based neurons and networks."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, DimensionError, InvalidKineticsError
from .kinetics import GatingKinetics, SynapticKinetics, gating_rate, synaptic_gating_rate

GATE_FIELDS = ("rho", "kappa", "zeta", "chi")
SYNAPTIC_GATE_FIELDS = ("rho", "kappa")


@dataclass(frozen=True)
class IonicCurrentSpec:
    """Ohmic current ``mu * m**p * h**q * (v - nu)``.

    An exponent of zero means the gate is absent, not a gate raised to 0.
    """

    name: str
    mu: float
    nu: float
    p: int = 0
    q: int = 0
    m: Optional[GatingKinetics] = None
    h: Optional[GatingKinetics] = None

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidKineticsError(f"current {self.name}: mu must be > 0")
        if self.p < 0 or self.q < 0:
            raise InvalidKineticsError(f"current {self.name}: exponents must be >= 0")
        if (self.p > 0) != (self.m is not None):
            raise InvalidKineticsError(f"current {self.name}: activation kinetics iff p > 0")
        if (self.q > 0) != (self.h is not None):
            raise InvalidKineticsError(f"current {self.name}: inactivation kinetics iff q > 0")


@dataclass(frozen=True)
class SynapseSpec:
    """Incoming synapse ``mu * s * (v - nu)`` driven by presynaptic neuron ``pre``."""

    name: str
    pre: int
    mu: float
    nu: float
    kinetics: SynapticKinetics

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidKineticsError(f"synapse {self.name}: mu must be > 0")


@dataclass(frozen=True)
class NeuronSpec:
    c: float
    mu_leak: float
    nu_leak: float
    currents: tuple = ()
    synapses: tuple = ()

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidKineticsError("capacitance must be > 0")
        if not self.mu_leak > 0:
            raise InvalidKineticsError("leak conductance must be > 0")
        object.__setattr__(self, "currents", tuple(self.currents))
        # synaptic gates are laid out in presynaptic-index order
        syn = sorted(self.synapses, key=lambda s: s.pre)
        object.__setattr__(self, "synapses", tuple(syn))

    def gate_labels(self):
        labels = []
        for cur in self.currents:
            if cur.p > 0:
                labels.append(f"m_{cur.name}")
            if cur.q > 0:
                labels.append(f"h_{cur.name}")
        for syn in self.synapses:
            labels.append(f"s_{syn.name}{syn.pre}")
        return labels

    def current_names(self):
        """Current order used for parameter columns: ionic, synaptic, leak."""
        return ([c.name for c in self.currents]
                + [f"{s.name}{s.pre}" for s in self.synapses] + ["L"])


@dataclass(frozen=True)
class NetworkSpec:
    neurons: tuple

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(self.neurons))
        n = len(self.neurons)
        if n == 0:
            raise ConfigError("network needs at least one neuron")
        for i, nrn in enumerate(self.neurons):
            for syn in nrn.synapses:
                if not 0 <= syn.pre < n:
                    raise ConfigError(f"neuron {i}: presynaptic index {syn.pre} out of range")

    @property
    def n_v(self):
        return len(self.neurons)

    @property
    def n_w(self):
        return sum(len(n.gate_labels()) for n in self.neurons)

    def gate_labels(self):
        """Flat gate labels; neuron-prefixed only for multi-neuron networks."""
        if self.n_v == 1:
            return self.neurons[0].gate_labels()
        return [f"n{i}.{g}" for i, nrn in enumerate(self.neurons) for g in nrn.gate_labels()]

    def gate_slices(self):
        out, start = [], 0
        for nrn in self.neurons:
            k = len(nrn.gate_labels())
            out.append(slice(start, start + k))
            start += k
        return out

    def replace_neuron(self, i, neuron):
        neurons = list(self.neurons)
        neurons[i] = neuron
        return replace(self, neurons=tuple(neurons))


def as_network(spec) -> NetworkSpec:
    if isinstance(spec, NetworkSpec):
        return spec
    if isinstance(spec, NeuronSpec):
        return NetworkSpec((spec,))
    raise TypeError(f"expected NeuronSpec or NetworkSpec, got {type(spec).__name__}")


@dataclass(frozen=True)
class Parametrization:
    """Split of model constants into linear unknowns, nonlinear uncertain ones, and fixed.

    layout
        ``"conductance"``: theta = (mu_k ...) per neuron.
        ``"scaled"``: theta = (1, mu_k ...) / c.
        ``"scaled_reversal"``: theta = (1, mu_k ..., mu_k nu_k ...) / c.
    currents
        Names (as in ``NeuronSpec.current_names``) entering theta, applied to
        every neuron; ``None`` selects all of them. Unselected currents are
        fixed and land in the drift term.
    eta
        ``(gate_label, field)`` pairs, field in ``rho, kappa, zeta, chi``. For
        networks, gate labels carry the ``n<i>.`` prefix.
    """

    layout: str = "scaled"
    currents: Optional[Sequence[str]] = None
    eta: Sequence = field(default_factory=tuple)

    def __post_init__(self):
        if self.layout not in ("conductance", "scaled", "scaled_reversal"):
            raise ConfigError(f"unknown parametrization layout {self.layout!r}")
        if self.currents is not None:
            object.__setattr__(self, "currents", tuple(self.currents))
        object.__setattr__(self, "eta", tuple(tuple(e) for e in self.eta))
        for _, fld in self.eta:
            if fld not in GATE_FIELDS:
                raise ConfigError(f"eta field must be one of {GATE_FIELDS}, got {fld!r}")


# ----------------------------------------------------------------------------
# direct (Kirchhoff) evaluation, independent of the regressor form


def _gate_kinetics(spec: NetworkSpec):
    """Per flat gate: (kind, kinetics, driving-neuron index)."""
    out = []
    for i, nrn in enumerate(spec.neurons):
        for cur in nrn.currents:
            if cur.p > 0:
                out.append(("intrinsic", cur.m, i))
            if cur.q > 0:
                out.append(("intrinsic", cur.h, i))
        for syn in nrn.synapses:
            out.append(("synaptic", syn.kinetics, syn.pre))
    return out


def _check_state(spec, v, w):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if v.shape != (spec.n_v,) or w.shape != (spec.n_w,):
        raise DimensionError(
            f"expected v of length {spec.n_v} and w of length {spec.n_w}, "
            f"got {v.shape} and {w.shape}")
    return v, w


def membrane_rhs(v, w, u, spec, mu_override=None):
    """dv/dt from Kirchhoff's law, summing every current directly.

    ``mu_override`` maps ``(neuron, current_name)`` to a replacement maximal
    conductance (used for time-varying true parameters).
    """
    spec = as_network(spec)
    v, w = _check_state(spec, v, w)
    u = np.broadcast_to(np.asarray(u, dtype=float), (spec.n_v,))
    mu_override = mu_override or {}
    out = np.empty(spec.n_v)
    slices = spec.gate_slices()
    for i, nrn in enumerate(spec.neurons):
        wi = w[slices[i]]
        j = 0
        total = nrn.mu_leak * (v[i] - nrn.nu_leak)
        for cur in nrn.currents:
            g = 1.0
            if cur.p > 0:
                g *= wi[j] ** cur.p
                j += 1
            if cur.q > 0:
                g *= wi[j] ** cur.q
                j += 1
            mu = mu_override.get((i, cur.name), cur.mu)
            total += mu * g * (v[i] - cur.nu)
        for syn in nrn.synapses:
            total += syn.mu * wi[j] * (v[i] - syn.nu)
            j += 1
        out[i] = (u[i] - total) / nrn.c
    return out


def gate_rates(v, w, spec):
    """Stacked per-gate rates evaluated one gate at a time."""
    spec = as_network(spec)
    v, w = _check_state(spec, v, w)
    out = np.empty(spec.n_w)
    for j, (kind, kin, src) in enumerate(_gate_kinetics(spec)):
        if kind == "intrinsic":
            out[j] = gating_rate(w[j], v[src], kin)
        else:
            out[j] = synaptic_gating_rate(w[j], v[src], kin)
    return out


def invariant_bounds(spec, u_bar):
    """Voltage interval that is positively invariant for |u| <= u_bar.

    For networks the synaptic reversal potentials are included among the
    reversal potentials; the box is the union over neurons.
    """
    if u_bar < 0:
        raise ValueError("u_bar must be >= 0")
    spec = as_network(spec)
    lo, hi = np.inf, -np.inf
    for nrn in spec.neurons:
        nus = [c.nu for c in nrn.currents] + [s.nu for s in nrn.synapses]
        nus = nus or [nrn.nu_leak]
        hi = max(hi, max(nus), u_bar / nrn.mu_leak + nrn.nu_leak)
        lo = min(lo, min(nus), -u_bar / nrn.mu_leak + nrn.nu_leak)
    return float(lo), float(hi)
