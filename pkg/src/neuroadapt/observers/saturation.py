"""Smooth saturations that are the identity on a box.

Outside ``[lo, hi]`` the excess ``d`` is mapped through ``d - d**3 / (3 W**2)``
with ``W = 1.5 * margin``, which reaches ``margin`` with zero slope at
``d = W`` and is constant beyond. The result is C1, bounded by
``[lo - margin, hi + margin]`` and 1-Lipschitz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from ..model import _kernels as K


@dataclass(frozen=True)
class SaturationSpec:
    lo: np.ndarray
    hi: np.ndarray
    margin: np.ndarray

    def __post_init__(self):
        lo, hi, m = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (self.lo, self.hi, self.margin))
        m = np.broadcast_to(m, lo.shape).copy()
        if lo.shape != hi.shape:
            raise DimensionError("lo and hi must have the same shape")
        if np.any(hi < lo):
            raise ValueError("saturation box needs hi >= lo")
        if np.any(m <= 0):
            raise ValueError("saturation margin must be > 0")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "margin", m)

    @classmethod
    def box(cls, lo, hi, margin_fraction=0.05):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        width = np.maximum(hi - lo, 1e-12)
        return cls(lo, hi, margin_fraction * width)

    @classmethod
    def for_parameters(cls, initial_guess, margin_fraction=0.05):
        """Default parameter box ``[0, 10 x initial guess]`` (sign-aware)."""
        x0 = np.atleast_1d(np.asarray(initial_guess, dtype=float))
        ends = 10.0 * x0
        lo = np.minimum(0.0, ends)
        hi = np.maximum(0.0, ends)
        hi = np.where(hi - lo > 0, hi, 1.0)
        return cls.box(lo, hi, margin_fraction)

    @classmethod
    def for_gates(cls, n_w, margin_fraction=0.05):
        return cls.box(np.full(n_w, -0.05), np.full(n_w, 1.05), margin_fraction)

    @classmethod
    def for_half_activations(cls, n_eta, margin_fraction=0.05):
        return cls.box(np.full(n_eta, -100.0), np.zeros(n_eta), margin_fraction)

    def __len__(self):
        return self.lo.shape[0]

    def packed(self):
        """(3, n) array of lo, hi, margin rows for the compiled kernels."""
        return np.ascontiguousarray(np.vstack([self.lo, self.hi, self.margin]))


def saturate(x, sat: SaturationSpec):
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)))
    if x.shape != sat.lo.shape:
        raise DimensionError(f"expected shape {sat.lo.shape}, got {x.shape}")
    out = np.empty_like(x)
    K.sat_vec(x, sat.lo, sat.hi, sat.margin, out)
    return out


def saturate_derivative(x, sat: SaturationSpec):
    x = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)))
    if x.shape != sat.lo.shape:
        raise DimensionError(f"expected shape {sat.lo.shape}, got {x.shape}")
    out = np.empty_like(x)
    K.sat_vec_deriv(x, sat.lo, sat.hi, sat.margin, out)
    return out
