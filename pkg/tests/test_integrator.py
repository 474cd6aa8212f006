import numpy as np
import pytest

from neuroadapt.errors import ConfigError, DimensionError, IntegrationError
from neuroadapt.integrator import read_csv, rk4_step, simulate, trajectory_columns, write_csv
from neuroadapt.model import invariant_bounds, membrane_rhs, spec_from_dict
from neuroadapt.signals import InputSignal, ParameterSchedule, calcium_signal

LEAK = spec_from_dict({"neurons": [{"c_uF_per_cm2": 1.0,
                                    "leak": {"mu_mS_per_cm2": 0.5, "nu_mV": -60.0}}]})[0]


def leak_exact(t, v0=-40.0, u=1.0):
    v_inf = -60.0 + u / 0.5
    return v_inf + (v0 - v_inf) * np.exp(-0.5 * t)


def test_rk4_step_exponential():
    # one step of RK4 on x' = -x reproduces the 4th-order Taylor polynomial
    h = 0.1
    x1 = rk4_step(lambda t, x: -x, np.array([1.0]), 0.0, h)
    assert x1[0] == pytest.approx(1 - h + h ** 2 / 2 - h ** 3 / 6 + h ** 4 / 24, rel=1e-15)


def test_leak_neuron_matches_closed_form():
    tr = simulate(LEAK, [-40.0], InputSignal.constant(1.0), 100.0, 0.1)
    assert np.max(np.abs(tr.v[:, 0] - leak_exact(tr.t))) < 1e-6


def test_rk4_fourth_order():
    errs = []
    for dt in (0.4, 0.2, 0.1):
        tr = simulate(LEAK, [-40.0], InputSignal.constant(1.0), 100.0, dt)
        errs.append(np.max(np.abs(tr.v[:, 0] - leak_exact(tr.t))))
    assert errs[0] / errs[1] > 14 and errs[1] / errs[2] > 14


def test_simulate_deterministic_with_seed(hh):
    a = simulate(hh[0], [-60, .1, .5, .3], InputSignal.sine(3, 10), 20.0, 0.01, noise_sigma=2.0, seed=7)
    b = simulate(hh[0], [-60, .1, .5, .3], InputSignal.sine(3, 10), 20.0, 0.01, noise_sigma=2.0, seed=7)
    c = simulate(hh[0], [-60, .1, .5, .3], InputSignal.sine(3, 10), 20.0, 0.01, noise_sigma=2.0, seed=8)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.v, c.v) and not np.array_equal(a.y, c.y)
    res = a.y - a.v
    assert abs(res.std() - 2.0) < 0.1


def test_noise_free_measurement_equals_voltage(spiking_run):
    assert np.array_equal(spiking_run.y, spiking_run.v)


def test_stored_state_consistent(hh):
    tr = simulate(hh[0], [-60, .1, .5, .3], InputSignal.sine(3, 10), 10.0, 0.01, w_stride=10)
    assert tr.w.shape == (101, 3)
    assert tr.state(100).shape == (4,)
    # the voltage derivative on the record agrees with the model's Kirchhoff law
    i = 50
    dv = (tr.v[i * 10 + 1, 0] - tr.v[i * 10 - 1, 0]) / 0.02
    assert dv == pytest.approx(membrane_rhs(tr.v[i * 10, 0], tr.w[i], tr.u[i * 10, 0], hh[0])[0],
                               rel=1e-3, abs=1e-3)


def test_schedule_changes_plant(hco):
    x0 = np.r_[-60.0, -50.0, np.full(12, 0.2)]
    sch = ParameterSchedule({(0, "Ca"): InputSignal.constant(0.5)})
    a = simulate(hco[0], x0, InputSignal.constant(-0.65), 50.0, 0.01)
    b = simulate(hco[0], x0, InputSignal.constant(-0.65), 50.0, 0.01, schedule=sch)
    assert not np.allclose(a.v[:, 0], b.v[:, 0])
    with pytest.raises(ConfigError):
        simulate(hco[0], x0, InputSignal.constant(-0.65), 1.0, 0.01,
                 schedule=ParameterSchedule({(0, "Xx"): calcium_signal()}))


def test_invariant_box_respected(hh):
    lo, hi = invariant_bounds(hh[0], 10.0)
    tr = simulate(hh[0], [hi, 1.0, 0.0, 1.0], InputSignal.sine(10.0, 7.0), 100.0, 0.01)
    assert tr.v.max() <= hi + 1e-9 and tr.v.min() >= lo - 1e-9
    assert tr.w.min() >= -1e-12 and tr.w.max() <= 1 + 1e-12


def test_bad_arguments(hh):
    u = InputSignal.constant(0.0)
    with pytest.raises(ConfigError):
        simulate(hh[0], [-60, .1, .5, .3], u, 1.005, 0.01)
    with pytest.raises(DimensionError):
        simulate(hh[0], [-60, .1, .5], u, 1.0, 0.01)
    with pytest.raises(ConfigError):
        simulate(hh[0], [-60, .1, .5, .3], u, 1.0, 0.01, w_stride=3)


def test_blow_up_reported():
    spec = spec_from_dict({"neurons": [{"c_uF_per_cm2": 1.0,
                                        "leak": {"mu_mS_per_cm2": 1e5, "nu_mV": 0.0}}]})[0]
    with pytest.raises(IntegrationError) as info:
        simulate(spec, [10.0], InputSignal.constant(0.0), 10.0, 0.1)
    assert info.value.step is not None


def test_csv_roundtrip(tmp_path, spiking_run):
    names, data = trajectory_columns(spiking_run, stride=10)
    assert names[:2] == ["t", "v_0"] and "w_m_Na" in names
    write_csv(tmp_path / "x.csv", names, data)
    n2, d2 = read_csv(tmp_path / "x.csv")
    assert n2 == names
    assert np.allclose(d2, data, rtol=1e-8)
