import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from neuroadapt.errors import InvalidKineticsError
from neuroadapt.model import (GatingKinetics, SynapticKinetics, bell_tau_eval, gating_rate,
                              sigmoid_eval, synaptic_gating_rate)

M_NA = GatingKinetics(-40.0, 9.0, 0.04, 0.50, -38.0, 30.0)
H_NA = GatingKinetics(-62.0, -7.0, 1.2, 8.6, -67.0, 20.0)
SYN = SynapticKinetics(-45.0, 2.0, 2.0, 0.1)

volts = st.floats(-150.0, 150.0)


def test_sigmoid_midpoint():
    assert sigmoid_eval(-40.0, -40.0, 9.0) == 0.5


def test_sigmoid_three_quarters():
    # 1 / (1 + e^{-ln 3}) = 3/4
    assert sigmoid_eval(-40.0 + 9.0 * math.log(3.0), -40.0, 9.0) == pytest.approx(0.75, rel=1e-14)


def test_inactivation_sigmoid_decreases():
    assert sigmoid_eval(-80.0, -62.0, -7.0) > 0.9 > 0.1 > sigmoid_eval(-40.0, -62.0, -7.0)


def test_bell_tau_peak_and_width():
    assert bell_tau_eval(-38.0, M_NA) == pytest.approx(0.50, rel=1e-15)
    mp.mp.dps = 30
    expected = mp.mpf("0.04") + mp.mpf("0.46") * mp.e ** -1
    assert bell_tau_eval(-8.0, M_NA) == pytest.approx(float(expected), rel=1e-14)
    assert bell_tau_eval(-68.0, M_NA) == pytest.approx(float(expected), rel=1e-14)


def test_gating_rate_against_high_precision():
    mp.mp.dps = 40
    v, x = mp.mpf("-55.3"), mp.mpf("0.37")
    sig = 1 / (1 + mp.e ** (-(v - (-62)) / (-7)))
    tau = mp.mpf("1.2") + mp.mpf("7.4") * mp.e ** (-((v + 67) ** 2) / 400)
    assert gating_rate(0.37, -55.3, H_NA) == pytest.approx(float((sig - x) / tau), rel=1e-13)


def test_synaptic_rate_against_high_precision():
    mp.mp.dps = 40
    v, s = mp.mpf("-44.0"), mp.mpf("0.2")
    sig = 1 / (1 + mp.e ** (-(v + 45) / 2))
    expected = 2 * sig * (1 - s) - mp.mpf("0.1") * s
    assert synaptic_gating_rate(0.2, -44.0, SYN) == pytest.approx(float(expected), rel=1e-13)


@pytest.mark.parametrize("kwargs", [
    dict(rho=0, kappa=0, tau_min=1, tau_max=2, zeta=0, chi=1),
    dict(rho=0, kappa=1, tau_min=0, tau_max=2, zeta=0, chi=1),
    dict(rho=0, kappa=1, tau_min=3, tau_max=2, zeta=0, chi=1),
    dict(rho=0, kappa=1, tau_min=1, tau_max=2, zeta=0, chi=0),
])
def test_invalid_gating_kinetics(kwargs):
    with pytest.raises(InvalidKineticsError):
        GatingKinetics(**kwargs)


def test_invalid_synaptic_kinetics():
    with pytest.raises(InvalidKineticsError):
        SynapticKinetics(-45.0, -2.0, 2.0, 0.1)
    with pytest.raises(InvalidKineticsError):
        SynapticKinetics(-45.0, 2.0, 0.0, 0.1)


@given(volts)
def test_sigmoid_in_unit_interval(v):
    s = sigmoid_eval(v, -40.0, 9.0)
    assert 0.0 <= s <= 1.0


@given(volts)
def test_bell_tau_within_bounds(v):
    assert 0.04 <= bell_tau_eval(v, M_NA) <= 0.50


@given(volts)
def test_synaptic_tau_within_bounds(v):
    assert 1.0 / 2.1 - 1e-12 <= SYN.tau(v) <= 10.0 + 1e-12


@given(volts, st.floats(0.0, 1.0))
def test_gate_flows_inward_at_box_faces(v, _):
    # the unit interval is invariant: the rate is >= 0 at 0 and <= 0 at 1
    assert gating_rate(0.0, v, M_NA) >= 0.0
    assert gating_rate(1.0, v, M_NA) <= 0.0
    assert synaptic_gating_rate(0.0, v, SYN) >= 0.0
    assert synaptic_gating_rate(1.0, v, SYN) <= 0.0


@given(st.floats(-100, 50), st.floats(-100, 50))
def test_activation_monotone(v1, v2):
    lo, hi = sorted((v1, v2))
    assert sigmoid_eval(lo, -40.0, 9.0) <= sigmoid_eval(hi, -40.0, 9.0)
    assert sigmoid_eval(lo, -62.0, -7.0) >= sigmoid_eval(hi, -62.0, -7.0)


def test_vectorised_evaluation_matches_scalar():
    v = np.linspace(-90, 40, 7)
    vec = sigmoid_eval(v, -40.0, 9.0)
    assert np.allclose(vec, [sigmoid_eval(x, -40.0, 9.0) for x in v], rtol=0, atol=0)
