"""Input currents and parameter schedules, evaluable inside compiled loops.

Every signal is encoded as ``(kind, params)`` with a flat float parameter
vector, so the same definition is evaluated by Python callers and by the
numba kernels at RK4 stage times.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import ConfigError

CONST, SINE, PULSES, PWL, LOGISTIC = range(5)
_KIND_NAMES = {"constant": CONST, "sine": SINE, "pulse-train": PULSES,
               "piecewise-linear": PWL, "logistic": LOGISTIC}


@njit(cache=True)
def signal_eval(kind, p, t):
    if kind == CONST:
        return p[0]
    if kind == SINE:
        # amp, period, phase, offset
        return p[0] * math.sin(2.0 * math.pi * t / p[1] + p[2]) + p[3]
    if kind == PULSES:
        # base, n, (start, width, amp) * n
        out = p[0]
        n = int(p[1])
        for i in range(n):
            s = p[2 + 3 * i]
            if s <= t < s + p[3 + 3 * i]:
                out += p[4 + 3 * i]
        return out
    if kind == PWL:
        # n, t_0..t_{n-1}, v_0..v_{n-1}; constant outside the knots
        n = int(p[0])
        if t <= p[1]:
            return p[1 + n]
        if t >= p[n]:
            return p[2 * n]
        for i in range(n - 1):
            t0 = p[1 + i]
            t1 = p[2 + i]
            if t <= t1:
                f = (t - t0) / (t1 - t0)
                return p[1 + n + i] * (1.0 - f) + p[2 + n + i] * f
        return p[2 * n]
    # LOGISTIC: base, amp, mid, width
    return p[0] + p[1] / (1.0 + math.exp(-(t - p[2]) / p[3]))


@njit(cache=True)
def signal_eval_many(kind, p, t, out):
    for i in range(t.shape[0]):
        out[i] = signal_eval(kind, p, t[i])


class InputSignal:
    """A scalar time function ``u(t)`` (uA/cm^2 for input currents).

    Build with the class methods rather than the constructor.
    """

    def __init__(self, kind: str, params):
        if kind not in _KIND_NAMES:
            raise ConfigError(f"unknown signal kind {kind!r}; known: {sorted(_KIND_NAMES)}")
        self.kind = kind
        self.params = np.ascontiguousarray(params, dtype=np.float64)

    @classmethod
    def constant(cls, value):
        return cls("constant", [value])

    @classmethod
    def sine(cls, amplitude, period_ms, phase=0.0, offset=0.0):
        if period_ms <= 0:
            raise ConfigError("sine period must be > 0")
        return cls("sine", [amplitude, period_ms, phase, offset])

    @classmethod
    def pulse_train(cls, pulses, base=0.0):
        """``pulses`` is a sequence of ``(start_ms, width_ms, amplitude)``."""
        flat = [base, len(pulses)]
        for start, width, amp in pulses:
            if width <= 0:
                raise ConfigError("pulse width must be > 0")
            flat += [start, width, amp]
        return cls("pulse-train", flat)

    @classmethod
    def piecewise_linear(cls, times_ms, values):
        times_ms = list(map(float, times_ms))
        if len(times_ms) != len(values) or not times_ms:
            raise ConfigError("piecewise-linear needs equally many (>0) times and values")
        if any(b <= a for a, b in zip(times_ms, times_ms[1:])):
            raise ConfigError("piecewise-linear times must be strictly increasing")
        return cls("piecewise-linear", [len(times_ms)] + times_ms + list(map(float, values)))

    @classmethod
    def logistic(cls, base, amplitude, midpoint_ms, width_ms):
        if width_ms == 0:
            raise ConfigError("logistic width must be nonzero")
        return cls("logistic", [base, amplitude, midpoint_ms, width_ms])

    @property
    def code(self):
        return _KIND_NAMES[self.kind]

    @property
    def u_bar(self):
        """An upper bound on ``|u(t)|`` over ``t >= 0``."""
        p = self.params
        if self.kind == "constant":
            return abs(p[0])
        if self.kind == "sine":
            return abs(p[0]) + abs(p[3])
        if self.kind == "pulse-train":
            return abs(p[0]) + sum(abs(p[4 + 3 * i]) for i in range(int(p[1])))
        if self.kind == "piecewise-linear":
            n = int(p[0])
            return float(np.max(np.abs(p[1 + n:1 + 2 * n])))
        return abs(p[0]) + abs(p[1])

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.empty_like(t_arr)
        signal_eval_many(self.code, self.params, np.ascontiguousarray(t_arr), out)
        return out[0] if np.ndim(t) == 0 else out.reshape(np.shape(t))

    def to_dict(self):
        return {"kind": self.kind, "params": self.params.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["params"])

    def __eq__(self, other):
        return (isinstance(other, InputSignal) and self.kind == other.kind
                and np.array_equal(self.params, other.params))

    def __repr__(self):
        return f"InputSignal({self.kind!r}, {self.params.tolist()})"


def pack_signals(signals):
    """Stack signals into ``(kinds, params)`` arrays for the kernels."""
    width = max([len(s.params) for s in signals] + [1])
    kinds = np.array([s.code for s in signals], dtype=np.int64)
    params = np.zeros((len(signals), width))
    for i, s in enumerate(signals):
        params[i, :len(s.params)] = s.params
    return kinds, params


class ParameterSchedule:
    """Time-varying maximal conductances of the true plant.

    Maps ``(neuron, current_name)`` to an :class:`InputSignal` giving the
    conductance in mS/cm^2. Constants not listed keep their spec value.
    """

    def __init__(self, entries=None):
        self.entries = dict(entries or {})

    def __bool__(self):
        return bool(self.entries)

    def values_at(self, t):
        return {key: sig(t) for key, sig in self.entries.items()}


def calcium_schedule(t, t_final=10000.0):
    """Logistic rise of the calcium conductance over a run of length ``t_final`` (ms)."""
    return 0.11 + 0.07 / (1.0 + np.exp(-(np.asarray(t, dtype=float) - t_final / 2.0) / 1250.0))


def calcium_signal(t_final=10000.0):
    return InputSignal.logistic(0.11, 0.07, t_final / 2.0, 1250.0)
