import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from neuroadapt.errors import ConfigError
from neuroadapt.signals import InputSignal, ParameterSchedule, calcium_schedule, calcium_signal


def test_calcium_schedule_midpoint():
    assert calcium_schedule(5000.0) == pytest.approx(0.145, rel=1e-15)


def test_calcium_schedule_ends():
    assert calcium_schedule(0.0) == pytest.approx(0.11 + 0.07 / (1 + math.e ** 4), rel=1e-14)
    assert calcium_schedule(0.0) == pytest.approx(0.11126, abs=5e-6)
    assert calcium_schedule(10000.0) == pytest.approx(0.17874, abs=5e-6)
    # symmetric about the midpoint
    assert calcium_schedule(0.0) + calcium_schedule(10000.0) == pytest.approx(0.29, rel=1e-14)


def test_calcium_signal_matches_function():
    t = np.linspace(0, 10000, 11)
    assert np.allclose(calcium_signal()(t), calcium_schedule(t), rtol=1e-14)


def test_sine_values():
    s = InputSignal.sine(1.0, 10.0)
    assert s(2.5) == pytest.approx(1.0)
    assert s(5.0) == pytest.approx(0.0, abs=1e-12)
    assert s.u_bar == 1.0


def test_pulse_train():
    s = InputSignal.pulse_train([(20.0, 1.0, 2.0), (60.0, 1.0, 4.0)], base=0.5)
    assert s(10.0) == 0.5
    assert s(20.5) == 2.5
    assert s(60.5) == 4.5
    assert s(61.5) == 0.5
    assert s.u_bar == 6.5


def test_piecewise_linear_interpolates():
    s = InputSignal.piecewise_linear([0.0, 10.0], [0.0, 5.0])
    assert s(4.0) == pytest.approx(2.0)


def test_constant_and_roundtrip():
    s = InputSignal.constant(-0.65)
    assert s(123.0) == -0.65
    assert InputSignal.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("bad", [
    lambda: InputSignal.sine(1.0, 0.0),
    lambda: InputSignal.pulse_train([(0.0, 0.0, 1.0)]),
    lambda: InputSignal.piecewise_linear([0.0, 0.0], [1.0, 2.0]),
    lambda: InputSignal.logistic(0, 1, 0, 0),
    lambda: InputSignal("chirp", [1.0]),
])
def test_invalid_signals(bad):
    with pytest.raises(ConfigError):
        bad()


@given(st.floats(-50, 50), st.floats(0.1, 100), st.floats(0, 1000))
def test_sine_bounded_by_u_bar(a, period, t):
    s = InputSignal.sine(a, period)
    assert abs(s(t)) <= s.u_bar + 1e-12


def test_schedule_values():
    sch = ParameterSchedule({(0, "Ca"): calcium_signal()})
    assert bool(sch) and not bool(ParameterSchedule())
    assert sch.values_at(5000.0)[(0, "Ca")] == pytest.approx(0.145)
