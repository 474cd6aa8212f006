"""Named model presets shipped as YAML, and the loader for user-written model files."""
from __future__ import annotations

from importlib import resources

import yaml

from ..errors import ConfigError
from .kinetics import GatingKinetics, SynapticKinetics
from .spec import IonicCurrentSpec, NetworkSpec, NeuronSpec, Parametrization, SynapseSpec

PRESETS = ("hh", "hco")


def _get(d, key, where):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise ConfigError(f"{where}: missing key {key!r}") from None


def _gating(d, where):
    return GatingKinetics(
        rho=float(_get(d, "rho_mV", where)), kappa=float(_get(d, "kappa_mV", where)),
        tau_min=float(_get(d, "tau_min_ms", where)), tau_max=float(_get(d, "tau_max_ms", where)),
        zeta=float(_get(d, "zeta_mV", where)), chi=float(_get(d, "chi_mV", where)))


def _synaptic(d, where):
    return SynapticKinetics(
        rho=float(_get(d, "rho_mV", where)), kappa=float(_get(d, "kappa_mV", where)),
        a=float(_get(d, "a_per_ms", where)), b=float(_get(d, "b_per_ms", where)))


def _current(d, where):
    name = str(_get(d, "name", where))
    where = f"{where}.{name}"
    p, q = int(d.get("p", 0)), int(d.get("q", 0))
    return IonicCurrentSpec(
        name=name, mu=float(_get(d, "mu_mS_per_cm2", where)), nu=float(_get(d, "nu_mV", where)),
        p=p, q=q,
        m=_gating(_get(d, "m", where), where + ".m") if p > 0 else None,
        h=_gating(_get(d, "h", where), where + ".h") if q > 0 else None)


def spec_from_dict(d):
    """Build ``(NetworkSpec, Parametrization)`` from a parsed model mapping."""
    neurons = []
    for i, nd in enumerate(_get(d, "neurons", "model")):
        where = f"neurons[{i}]"
        leak = _get(nd, "leak", where)
        currents = tuple(_current(c, where) for c in nd.get("currents") or ())
        synapses = tuple(
            SynapseSpec(name=str(_get(s, "name", where)), pre=int(_get(s, "pre", where)),
                        mu=float(_get(s, "mu_mS_per_cm2", where)), nu=float(_get(s, "nu_mV", where)),
                        kinetics=_synaptic(_get(s, "kinetics", where), where + ".synapse"))
            for s in nd.get("synapses") or ())
        neurons.append(NeuronSpec(
            c=float(_get(nd, "c_uF_per_cm2", where)),
            mu_leak=float(_get(leak, "mu_mS_per_cm2", where + ".leak")),
            nu_leak=float(_get(leak, "nu_mV", where + ".leak")),
            currents=currents, synapses=synapses))
    pd = d.get("parametrization") or {}
    par = Parametrization(layout=pd.get("layout", "scaled"), currents=pd.get("currents"),
                          eta=[tuple(e) for e in pd.get("eta") or ()])
    return NetworkSpec(tuple(neurons)), par


def load_model_file(path):
    with open(path) as fh:
        return spec_from_dict(yaml.safe_load(fh))


def preset(name):
    """Return ``(NetworkSpec, Parametrization)`` for a shipped preset."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files(__package__).joinpath("data", f"{name}.yaml").read_text()
    return spec_from_dict(yaml.safe_load(text))


def list_presets():
    return list(PRESETS)
