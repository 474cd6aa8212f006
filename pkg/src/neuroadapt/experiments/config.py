"""Declarative scenario files.

A scenario is a YAML mapping whose numeric keys carry their unit in the
name (``alpha_per_ms``, ``t_end_ms``, ``sigma_mV``). :class:`ScenarioConfig`
keeps the nested sections as plain dictionaries so a loaded file dumps back
to the same mapping; :meth:`ScenarioConfig.validate` resolves every section
once so errors surface before any integration starts.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..errors import ConfigError
from ..model import Parametrization, list_presets, preset, spec_from_dict
from ..signals import InputSignal

TASKS = ("simulate", "estimate", "landscape")
VARIANTS = ("reduced", "rls", "augmented", "output_error", "network", "batch")
HOLDS = ("linear", "zoh")


def _need(d, key, where):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    return d[key]


def _num(d, key, where, default=None, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}: missing key {key!r}")
        return default
    try:
        x = float(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a number, got {d[key]!r}") from None
    if not np.isfinite(x):
        raise ConfigError(f"{where}.{key} must be finite")
    if positive and not x > 0:
        raise ConfigError(f"{where}.{key} must be > 0")
    if nonneg and x < 0:
        raise ConfigError(f"{where}.{key} must be >= 0")
    return x


def _unknown(d, allowed, where):
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def signal_from_config(d, unit="uA_per_cm2", where="input"):
    """Build an :class:`InputSignal` from a unit-suffixed mapping.

    ``unit`` is the suffix of amplitude-like keys (``uA_per_cm2`` for input
    currents, ``mS_per_cm2`` for conductance schedules).
    """
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    kind = _need(d, "kind", where)
    val, amp, base, off = (f"value_{unit}", f"amplitude_{unit}", f"base_{unit}", f"offset_{unit}")
    if kind == "constant":
        _unknown(d, ["kind", val], where)
        return InputSignal.constant(_num(d, val, where))
    if kind == "sine":
        _unknown(d, ["kind", amp, "period_ms", "phase_rad", off], where)
        return InputSignal.sine(_num(d, amp, where), _num(d, "period_ms", where, positive=True),
                                _num(d, "phase_rad", where, 0.0), _num(d, off, where, 0.0))
    if kind == "pulse_train":
        _unknown(d, ["kind", base, "pulses"], where)
        pulses = []
        for k, p in enumerate(_need(d, "pulses", where)):
            w = f"{where}.pulses[{k}]"
            _unknown(p, ["start_ms", "width_ms", amp], w)
            pulses.append((_num(p, "start_ms", w), _num(p, "width_ms", w, positive=True),
                           _num(p, amp, w)))
        return InputSignal.pulse_train(pulses, _num(d, base, where, 0.0))
    if kind == "piecewise_linear":
        _unknown(d, ["kind", "times_ms", f"values_{unit}"], where)
        return InputSignal.piecewise_linear(_need(d, "times_ms", where),
                                            [float(v) for v in _need(d, f"values_{unit}", where)])
    if kind == "logistic":
        _unknown(d, ["kind", base, amp, "midpoint_ms", "width_ms"], where)
        return InputSignal.logistic(_num(d, base, where), _num(d, amp, where),
                                    _num(d, "midpoint_ms", where), _num(d, "width_ms", where))
    raise ConfigError(f"{where}: unknown signal kind {kind!r}")


def _grid(g, where):
    if isinstance(g, dict):
        _unknown(g, ["start", "stop", "step"], where)
        start, stop, step = (_num(g, "start", where), _num(g, "stop", where),
                             _num(g, "step", where, positive=True))
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        if n < 2:
            raise ConfigError(f"{where}: grid needs at least two points")
        return start + step * np.arange(n)
    arr = np.asarray(g, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ConfigError(f"{where}: grid must be a list of at least two values")
    return arr


_OBSERVER_KEYS = ["variant", "alpha_per_ms", "beta_per_ms", "gamma_per_ms", "p0", "theta0",
                  "eta0_mV", "v0_mV", "w0", "hold", "record_stride", "T_ms"]


@dataclass
class ScenarioConfig:
    """One reproducible run: plant, measurement, estimator and outputs."""

    name: str
    task: str = "estimate"
    description: str = ""
    seed: int = 0
    model: dict = field(default_factory=lambda: {"preset": "hh"})
    parametrization: dict | None = None
    input: dict = field(default_factory=lambda: {"kind": "constant", "value_uA_per_cm2": 0.0})
    plant: dict = field(default_factory=dict)
    noise: dict = field(default_factory=lambda: {"sigma_mV": 0.0})
    mismatch: dict = field(default_factory=lambda: {"fraction": 0.0})
    schedule: list = field(default_factory=list)
    observer: dict | None = None
    landscape: dict | None = None
    diagnostics: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    # -- serialisation ------------------------------------------------------

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("scenario file must hold a mapping")
        names = {f.name for f in fields(cls)}
        _unknown(d, names, "scenario")
        cfg = cls(**copy.deepcopy(d))
        cfg.validate()
        return cfg

    def to_dict(self):
        return copy.deepcopy(asdict(self))

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text):
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        return cls.from_yaml(text)

    def with_overrides(self, seed=None, dt_ms=None):
        d = self.to_dict()
        if seed is not None:
            d["seed"] = int(seed)
            d["noise"].pop("seed", None)
            d["mismatch"].pop("seed", None)
        if dt_ms is not None:
            d["plant"]["dt_ms"] = float(dt_ms)
        return ScenarioConfig.from_dict(d)

    # -- resolution -----------------------------------------------------------

    def resolve_model(self):
        """``(spec, parametrization)`` with the config's parametrization applied."""
        m = self.model
        if "preset" in m:
            _unknown(m, ["preset"], "model")
            if m["preset"] not in list_presets():
                raise ConfigError(f"model.preset: unknown preset {m['preset']!r}")
            spec, par = preset(m["preset"])
        elif "inline" in m:
            _unknown(m, ["inline"], "model")
            spec, par = spec_from_dict(m["inline"])
        else:
            raise ConfigError("model needs either 'preset' or 'inline'")
        if self.parametrization is not None:
            p = self.parametrization
            _unknown(p, ["layout", "currents", "eta"], "parametrization")
            par = Parametrization(layout=p.get("layout", "scaled"), currents=p.get("currents"),
                                  eta=[tuple(e) for e in p.get("eta", [])])
        return spec, par

    def input_signal(self):
        return signal_from_config(self.input)

    @property
    def dt(self):
        return _num(self.plant, "dt_ms", "plant", 0.01, positive=True)

    @property
    def t_end(self):
        return _num(self.plant, "t_end_ms", "plant", positive=True)

    @property
    def steps(self):
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ConfigError(f"plant.t_end_ms={self.t_end} is not a multiple of dt_ms={self.dt}")
        return n

    def stride_steps(self, ms, where):
        """Number of grid steps in ``ms``; at least one."""
        k = max(1, int(round(ms / self.dt)))
        if abs(k * self.dt - ms) > 1e-9 * max(1.0, ms) and ms >= self.dt:
            raise ConfigError(f"{where}={ms} ms is not a multiple of dt_ms={self.dt}")
        return k

    @property
    def csv_stride(self):
        return self.stride_steps(_num(self.outputs, "csv_stride_ms", "outputs", 0.1,
                                      positive=True), "outputs.csv_stride_ms")

    @property
    def noise_sigma(self):
        return _num(self.noise, "sigma_mV", "noise", 0.0, nonneg=True)

    @property
    def mismatch_fraction(self):
        return _num(self.mismatch, "fraction", "mismatch", 0.0, nonneg=True)

    def seeds(self):
        """``(noise_seed, mismatch_seed)``: explicit values or independent children of ``seed``."""
        children = np.random.SeedSequence(int(self.seed)).spawn(2)
        derived = [int(c.generate_state(1, np.uint32)[0]) for c in children]
        noise = int(self.noise["seed"]) if self.noise.get("seed") is not None else derived[0]
        mis = int(self.mismatch["seed"]) if self.mismatch.get("seed") is not None else derived[1]
        return noise, mis

    def schedule_signals(self):
        """``{(neuron, current): InputSignal}`` for the true plant."""
        out = {}
        for k, entry in enumerate(self.schedule):
            w = f"schedule[{k}]"
            _unknown(entry, ["neuron", "current", "signal"], w)
            key = (int(_need(entry, "neuron", w)), str(_need(entry, "current", w)))
            out[key] = signal_from_config(_need(entry, "signal", w), "mS_per_cm2", w + ".signal")
        return out

    def observer_settings(self):
        o = self.observer
        if o is None:
            raise ConfigError("task 'estimate' needs an 'observer' section")
        _unknown(o, _OBSERVER_KEYS, "observer")
        variant = _need(o, "variant", "observer")
        if variant not in VARIANTS:
            raise ConfigError(f"observer.variant must be one of {VARIANTS}, got {variant!r}")
        hold = o.get("hold", "linear")
        if hold not in HOLDS:
            raise ConfigError(f"observer.hold must be one of {HOLDS}")
        rs = int(o.get("record_stride", 10))
        if rs < 1:
            raise ConfigError("observer.record_stride must be >= 1")
        return {
            "variant": variant,
            "alpha": _num(o, "alpha_per_ms", "observer", 0.1, nonneg=True),
            "beta": _num(o, "beta_per_ms", "observer", 0.0, nonneg=True),
            "gamma": _num(o, "gamma_per_ms", "observer", 1.0, positive=True),
            "p0": _num(o, "p0", "observer", 1.0, positive=True),
            "theta0": o.get("theta0"), "eta0": o.get("eta0_mV"), "v0": o.get("v0_mV"),
            "w0": o.get("w0"), "hold": hold, "record_stride": rs,
            "T_list": [float(T) for T in o.get("T_ms", [])],
        }

    def landscape_settings(self):
        d = self.landscape
        if d is None:
            raise ConfigError("task 'landscape' needs a 'landscape' section")
        _unknown(d, ["current", "neuron", "grid_mS_per_cm2", "horizon_ms"], "landscape")
        return {"current": str(d.get("current", "Na")), "neuron": int(d.get("neuron", 0)),
                "grid": _grid(_need(d, "grid_mS_per_cm2", "landscape"), "landscape.grid_mS_per_cm2"),
                "T": _num(d, "horizon_ms", "landscape", positive=True)}

    def validate(self):
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError("scenario needs a non-empty 'name'")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        try:
            self.seed = int(self.seed)
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        spec, par = self.resolve_model()
        self.input_signal()
        _unknown(self.plant, ["x0", "t_end_ms", "dt_ms", "burn_in"], "plant")
        _ = self.steps
        b = self.plant.get("burn_in")
        if b is not None:
            _unknown(b, ["t_end_ms", "x0", "input", "mu_override_mS_per_cm2"], "plant.burn_in")
            _num(b, "t_end_ms", "plant.burn_in", positive=True)
            if "input" in b:
                signal_from_config(b["input"], where="plant.burn_in.input")
        elif "x0" not in self.plant:
            raise ConfigError("plant needs 'x0' or 'burn_in'")
        n_x = spec.n_v + spec.n_w
        x0 = self.plant.get("x0", b.get("x0") if b else None)
        if x0 is not None and len(x0) != n_x:
            raise ConfigError(f"plant x0 must have {n_x} entries")
        _unknown(self.noise, ["sigma_mV", "seed"], "noise")
        _unknown(self.mismatch, ["fraction", "seed"], "mismatch")
        _ = self.noise_sigma, self.mismatch_fraction
        self.schedule_signals()
        _unknown(self.outputs, ["csv_stride_ms", "summary_window_ms"], "outputs")
        _ = self.csv_stride
        _num(self.outputs, "summary_window_ms", "outputs", 1.0, positive=True)
        _unknown(self.diagnostics, ["pe_window_ms", "rate_window_ms"], "diagnostics")
        if self.task == "estimate":
            s = self.observer_settings()
            if s["variant"] == "batch" and not s["T_list"]:
                raise ConfigError("observer.T_ms is required for the batch variant")
        if self.task == "landscape":
            self.landscape_settings()
        return self


# ----------------------------------------------------------------------------
# shipped scenarios


def _data_dir():
    return resources.files("neuroadapt.experiments") / "data"


def list_scenarios():
    return sorted(p.name[:-5] for p in _data_dir().iterdir() if p.name.endswith(".yaml"))


def load_scenario(name_or_path):
    """A shipped scenario by name, or a YAML file by path."""
    p = Path(str(name_or_path))
    if p.suffix in (".yaml", ".yml", ".cfg") or p.exists():
        return ScenarioConfig.load(p)
    res = _data_dir() / f"{name_or_path}.yaml"
    if not res.is_file():
        raise ConfigError(f"unknown scenario {name_or_path!r}; shipped: {list_scenarios()}")
    return ScenarioConfig.from_yaml(res.read_text())
