import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from neuroadapt.errors import DimensionError
from neuroadapt.integrator import simulate
from neuroadapt.model import Parametrization, compile_model
from neuroadapt.observers import (AugmentedObserver, AugmentedObserverState, Hyperparameters,
                                  NetworkObserver, ReducedObserver, RlsObserver, RlsObserverState,
                                  SaturationSpec, augmented_observer_rhs, integrate,
                                  network_observer_rhs, output_error_observer_rhs,
                                  reduced_observer_rhs, rls_observer_rhs, saturate,
                                  saturate_derivative, symmetrize_p, RLS)
from neuroadapt.signals import InputSignal

BOX = SaturationSpec.box([0.0], [1.0])  # margin 0.05, roll-off width 0.075


# -- saturation -----------------------------------------------------------------

@given(st.floats(0.0, 1.0))
def test_saturation_identity_on_box(x):
    assert saturate([x], BOX)[0] == x
    assert saturate_derivative([x], BOX)[0] == 1.0


@given(st.floats(-1e6, 1e6))
def test_saturation_bounded(x):
    assert -0.05 <= saturate([x], BOX)[0] <= 1.05


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_saturation_monotone_and_lipschitz(a, b):
    sa, sb = saturate([a], BOX)[0], saturate([b], BOX)[0]
    assert (sa - sb) * (a - b) >= 0
    assert abs(sa - sb) <= abs(a - b) + 1e-15


def test_saturation_roll_off_values():
    # cubic d - d^3 / (3 W^2) with W = 0.075 reaches the margin exactly at d = W
    W = 0.075
    assert saturate([1.0 + W], BOX)[0] == pytest.approx(1.05, rel=1e-15)
    d = 0.03
    assert saturate([1.0 + d], BOX)[0] == pytest.approx(1.0 + d - d ** 3 / (3 * W * W), rel=1e-15)
    assert saturate([-d], BOX)[0] == pytest.approx(-d + d ** 3 / (3 * W * W), rel=1e-15)
    assert saturate_derivative([1.0 + W], BOX)[0] == pytest.approx(0.0, abs=1e-12)
    assert saturate_derivative([1.0 + 1.01 * W], BOX)[0] == 0.0


@given(st.floats(-0.2, 1.2))
def test_saturation_derivative_matches_fd(x):
    h = 1e-7
    fd = (saturate([x + h], BOX)[0] - saturate([x - h], BOX)[0]) / (2 * h)
    assert saturate_derivative([x], BOX)[0] == pytest.approx(fd, abs=1e-5)


def test_default_parameter_box_sign_aware():
    s = SaturationSpec.for_parameters([2.0, -3.0, 0.0])
    assert list(s.lo) == [0.0, -30.0, 0.0]
    assert list(s.hi) == [20.0, 0.0, 1.0]


# -- hyperparameters ------------------------------------------------------------

def test_hyperparameter_validation():
    with pytest.raises(ValueError):
        Hyperparameters(alpha=0.0, gamma=1.0)
    with pytest.raises(ValueError):
        Hyperparameters(alpha=0.1, gamma=1.0, beta=-1.0)
    with pytest.raises(ValueError):
        Hyperparameters(alpha=0.1, gamma=1.0, p0=[[1.0, 0.0], [0.0, -1.0]]).p0_matrix(2)
    P = Hyperparameters(alpha=0.1, gamma=1.0, p0=0.5).p0_matrix(3)
    assert np.array_equal(P, 0.5 * np.eye(3))


def test_symmetrize():
    P = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(symmetrize_p(P), [[1.0, 1.0], [1.0, 1.0]])


# -- single-point right-hand sides ----------------------------------------------

def test_reduced_rhs_is_internal_dynamics(hh):
    w = np.array([0.2, 0.5, 0.4])
    A, b = compile_model(*hh).internal(np.array([-55.0]))
    assert np.allclose(reduced_observer_rhs(w, -55.0, *hh), A @ w + b, rtol=1e-14)


def test_rls_rhs_at_initial_state(hh):
    spec, par = hh
    m = compile_model(spec, par)
    th = np.array([2.0, 78.0, 78.0, 10.0])
    st0 = RlsObserverState(np.array([-30.0]), np.array([0.1, 0.2, 0.3]), th,
                           np.zeros((1, 4)), np.eye(4))
    hyp = Hyperparameters(alpha=0.1, gamma=1.0)
    d = rls_observer_rhs(st0, -25.0, 1.5, hyp, spec, par)
    Phi, a = m.phi_a(-25.0, st0.w_hat, 1.5)
    A, b = m.internal(np.array([-25.0]))
    assert d.v_hat[0] == pytest.approx((Phi @ th + a)[0] + 5.0, rel=1e-13)
    assert np.allclose(d.w_hat, A @ st0.w_hat + b, rtol=1e-13)
    assert np.array_equal(d.theta_hat, np.zeros(4))
    assert np.allclose(d.Psi, Phi, rtol=1e-14)
    assert np.allclose(d.P, 0.1 * np.eye(4), rtol=1e-14)


def test_rls_rhs_gain_term(hh):
    spec, par = hh
    Psi = np.array([[0.5, -1.0, 2.0, 0.1]])
    P = np.diag([1.0, 2.0, 0.5, 1.0])
    st0 = RlsObserverState(np.array([-30.0]), np.array([0.1, 0.2, 0.3]),
                           np.array([1.0, 120.0, 36.0, 0.3]), Psi, P)
    hyp = Hyperparameters(alpha=0.2, gamma=0.5)
    d = rls_observer_rhs(st0, -28.0, 0.0, hyp, spec, par)
    e = 2.0
    assert np.allclose(d.theta_hat, 0.5 * P @ Psi[0] * e, rtol=1e-14)
    assert np.allclose(d.P, 0.2 * P - P @ np.outer(Psi[0], Psi[0]) @ P, rtol=1e-14)


def test_augmented_without_eta_equals_rls_rhs(hh):
    spec, par = hh
    Psi = np.array([[0.5, -1.0, 2.0, 0.1]])
    st_r = RlsObserverState(np.array([-30.0]), np.array([0.1, 0.2, 0.3]),
                            np.array([1.0, 120.0, 36.0, 0.3]), Psi, np.eye(4))
    st_a = AugmentedObserverState(st_r.v_hat, st_r.w_hat, st_r.theta_hat, np.zeros(0), Psi,
                                  np.zeros((3, 4)), np.eye(4))
    hyp = Hyperparameters(alpha=0.1, gamma=1.0)
    dr = rls_observer_rhs(st_r, -28.0, 1.0, hyp, spec, par)
    da = augmented_observer_rhs(st_a, -28.0, 1.0, hyp, spec, par)
    assert np.array_equal(da.theta_hat, dr.theta_hat)
    assert np.array_equal(da.Psi_v, dr.Psi)
    assert np.array_equal(da.P, dr.P)
    assert np.array_equal(da.v_hat, dr.v_hat)


def test_augmented_rhs_beta_and_eta_columns(hh_eta_model):
    m = hh_eta_model
    st0 = AugmentedObserverState(np.array([-40.0]), np.array([0.1, 0.6, 0.3]),
                                 m.theta_true.copy(), m.eta_true.copy(), np.zeros((1, 7)),
                                 np.zeros((3, 7)), np.eye(7))
    hyp = Hyperparameters(alpha=0.1, gamma=1.0, beta=2.0)
    d = augmented_observer_rhs(st0, -40.0, 0.0, hyp, m)
    assert np.allclose(d.P, 2.1 * np.eye(7))
    J = m.jac_eta(np.array([-40.0]), m.eta_true, st0.w_hat)
    assert np.allclose(d.Psi_w[:, 4:], J, rtol=1e-13)
    assert np.array_equal(d.Psi_w[:, :4], np.zeros((3, 4)))


def test_output_error_uses_estimated_voltage(hh):
    spec, par = hh
    m = compile_model(spec, par)
    st0 = AugmentedObserverState(np.array([-50.0]), np.array([0.1, 0.6, 0.3]), m.theta_true,
                                 np.zeros(0), np.zeros((1, 4)), np.zeros((3, 4)), np.eye(4))
    hyp = Hyperparameters(alpha=0.1, gamma=1.0)
    d = output_error_observer_rhs(st0, -20.0, 0.0, hyp, spec, par)
    Phi, a = m.phi_a(-50.0, st0.w_hat, 0.0)
    assert np.allclose(d.Psi_v, Phi, rtol=1e-14)
    assert d.v_hat[0] == pytest.approx((Phi @ m.theta_true + a)[0] + 30.0, rel=1e-13)


def test_network_rhs_per_neuron(hco):
    spec, par = hco
    states = []
    for i in range(2):
        m = compile_model(spec, par, neurons=[i])
        states.append(AugmentedObserverState(np.array([-50.0]), np.full(6, 0.2), m.theta_true,
                                             np.zeros(0), np.zeros((1, 5)), np.zeros((6, 5)),
                                             np.eye(5)))
    hyp = Hyperparameters(alpha=0.0025, gamma=0.1)
    out = network_observer_rhs(states, np.array([-45.0, -60.0]), -0.65, hyp, spec, par)
    assert len(out) == 2
    with pytest.raises(DimensionError):
        network_observer_rhs(states[:1], np.array([-45.0, -60.0]), -0.65, hyp, spec, par)


# -- estimators -----------------------------------------------------------------

def test_estimator_params_and_clone():
    est = AugmentedObserver(alpha=0.2, beta=3.0, theta0=[1, 2, 3, 4])
    p = est.get_params()
    assert p["alpha"] == 0.2 and p["beta"] == 3.0
    c = clone(est).set_params(gamma=0.5)
    assert c.gamma == 0.5 and est.gamma == 1.0


def test_not_fitted(spiking_run):
    with pytest.raises(NotFittedError):
        RlsObserver().predict(spiking_run.u, spiking_run.y)


@pytest.fixture(scope="module")
def long_spiking_run(hh):
    return simulate(hh[0], [-30.0, 0.5, 0.5, 0.5], InputSignal.sine(3.0, 10.0), 250.0, 0.01)


def test_rls_converges_on_spiking_data(long_spiking_run):
    r = long_spiking_run
    obs = RlsObserver(theta0=[2.0, 78.0, 78.0, 10.0], v0=-30.0, w0=[0, 0, 0], alpha=0.1,
                      gamma=1.0, record_stride=100).fit(r.u, r.y)
    assert np.allclose(obs.theta_, [1.0, 120.0, 36.0, 0.3], rtol=0.02)
    assert obs.history_.shape[0] == 251
    assert obs.t_[-1] == pytest.approx(250.0)
    P = obs.P_
    assert np.allclose(P, P.T) and np.linalg.eigvalsh(P).min() > 0


def test_partial_fit_continues_exactly(spiking_run):
    u, y = spiking_run.u, spiking_run.y
    kw = dict(theta0=[2.0, 78.0, 78.0, 10.0], v0=-30.0, w0=[0, 0, 0])
    full = RlsObserver(**kw).fit(u, y)
    split = RlsObserver(**kw).fit(u[:2501], y[:2501]).partial_fit(u[2500:], y[2500:])
    assert np.array_equal(full.state_, split.state_)
    assert split.t_end_ == pytest.approx(60.0)


def test_transform_does_not_mutate(spiking_run):
    u, y = spiking_run.u, spiking_run.y
    obs = RlsObserver(theta0=[2.0, 78.0, 78.0, 10.0]).fit(u[:1001], y[:1001])
    before = obs.state_.copy()
    rec = obs.transform(u[1000:2001], y[1000:2001])
    assert np.array_equal(obs.state_, before)
    assert rec.shape[0] == 1001
    vhat = obs.predict(u[1000:2001], y[1000:2001])
    assert vhat.shape == (1001, 1)


def test_reduced_observer_tracks_gates(spiking_run):
    obs = ReducedObserver(w0=[1.0, 1.0, 1.0], record_stride=10).fit(spiking_run.u, spiking_run.y)
    w_true = spiking_run.w[-1]
    assert np.allclose(obs.w_, w_true, atol=1e-3)


def test_augmented_converges_on_spiking_data(hh_eta_model):
    tr = simulate(hh_eta_model.spec, [-30.0, 0.5, 0.5, 0.5], InputSignal.sine(3.0, 10.0), 250.0, 0.01)
    obs = AugmentedObserver(hh_eta_model, theta0=[2, 78, 78, 10], eta0=[-20, -20, -20], v0=-30,
                            w0=[0, 0, 0], record_stride=100).fit(tr.u, tr.y)
    assert np.allclose(obs.theta_, [1, 120, 36, 0.3], rtol=0.05)
    assert np.allclose(obs.eta_, [-40, -62, -53], atol=2.0)


def test_dimension_errors(spiking_run):
    with pytest.raises(DimensionError):
        RlsObserver(theta0=[1.0, 2.0]).fit(spiking_run.u, spiking_run.y)
    with pytest.raises(DimensionError):
        RlsObserver().fit(spiking_run.u[:10], np.zeros((10, 2)))


def test_network_observer_shapes(hco):
    x0 = np.r_[-60.0, -50.0, np.full(12, 0.2)]
    tr = simulate(hco[0], x0, InputSignal.constant(-0.65), 20.0, 0.01)
    obs = NetworkObserver(theta0=[80, 80, 1, 10, 1], v0=-50.0, record_stride=100).fit(tr.u, tr.y)
    assert len(obs.theta_) == 2 and obs.theta_[0].shape == (5,)
    assert obs.theta_labels_[1][3] == "n1.mu_G0"
    assert obs.predict(tr.u, tr.y).shape == (21, 2)


def test_substepping_keeps_covariance_definite(hh):
    # a wound-up covariance meeting a large regressor: plain RK4 at this step
    # is unstable, the substepped loop is not
    m = compile_model(*hh)
    n = 4
    P0 = np.diag([1e3, 1.0, 1.0, 1.0])
    x0 = RlsObserverState(np.array([-60.0]), np.array([0.05, 0.6, 0.3]), np.ones(n),
                          np.array([[5.0, 0.0, 0.0, 0.0]]), P0).flat()
    Y = np.full((11, 1), -60.0)
    U = np.zeros((11, 1))
    hyp = Hyperparameters(alpha=0.1, gamma=1.0)
    _, xf = integrate(m, RLS, x0, Y, U, 0.01, hyp)
    P = RlsObserverState.from_flat(xf, 1, 3, n).P
    assert np.linalg.eigvalsh(P).min() > 0
    with pytest.raises(Exception):
        integrate(m, RLS, x0, Y, U, 0.01, hyp, step_limit=0.0)
