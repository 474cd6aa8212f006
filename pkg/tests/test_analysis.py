import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from neuroadapt import analysis as an
from neuroadapt.errors import DimensionError, InfeasibleRateError, NotPersistentlyExcitingError
from neuroadapt.model import compile_model
from neuroadapt.observers import RlsObserver, RlsObserverState

finite = st.floats(-3.0, 3.0, allow_nan=False)


# -- spikes -----------------------------------------------------------------------

def test_spike_times_linear_crossing():
    t = np.arange(0, 101) * 0.1
    v = np.where(t < 5.0, t - 2.35, 7.65 - t)  # crosses 0 upward at 2.35 only
    assert an.spike_times(t, v) == pytest.approx([2.35], abs=1e-12)


def test_spike_times_refractory_merge():
    t = np.arange(0, 1001) * 0.01
    v = 20.0 * np.sin(2 * np.pi * t / 0.5)  # upward zero crossings every 0.5 ms
    assert an.count_spikes(t, v, refractory=0.0) == 19
    assert an.count_spikes(t, v, refractory=0.9) == 10
    assert an.count_spikes(t, v, threshold=30.0) == 0
    with pytest.raises(DimensionError):
        an.spike_times(t, v[:-1])


# -- persistent excitation ------------------------------------------------------------

def test_pe_gramian_sin_cos():
    # int over a full period of [sin, cos]^T [sin, cos] is pi I
    dt = 2 * np.pi / 2000
    t = np.arange(0, 8001) * dt
    psi = np.column_stack([np.sin(t), np.cos(t)])
    rep = an.pe_gramian(psi, dt, 2 * np.pi)
    assert rep.delta == pytest.approx(np.pi, rel=1e-9)
    assert rep.is_pe
    assert rep.to_dict()["n_windows"] == rep.window_starts.size


def test_pe_gramian_constant_and_zero():
    rep = an.pe_gramian(np.ones(1001), 0.01, 2.5)
    assert rep.delta == pytest.approx(2.5, rel=1e-12)
    assert not an.pe_gramian(np.zeros(1001), 0.01, 2.5).is_pe
    t = np.arange(0, 1001) * 0.01
    collinear = np.column_stack([np.sin(t), 2 * np.sin(t)])
    assert not an.pe_gramian(collinear, 0.01, 5.0).is_pe
    with pytest.raises(ValueError):
        an.pe_gramian(np.ones(101), 0.01, 5.0)


@given(arrays(float, (50, 2, 3), elements=finite))
def test_cumulative_gramian_psd_and_monotone(psi):
    C = an.cumulative_gramian(psi, 0.1)
    assert np.all(np.linalg.eigvalsh(C[-1]) > -1e-9)
    assert np.all(np.linalg.eigvalsh(C[-1] - C[25]) > -1e-9)


# -- covariance bounds ----------------------------------------------------------------

def _bounds_oracle(alpha, beta, delta, T, phi, p0):
    p_lo = 1.0 / (1.0 / p0 + phi ** 2 / alpha)
    p_hi = np.exp(2 * alpha * T) / delta
    p_hi *= 1.0 + beta * np.exp(2 * alpha * T) * phi ** 4 / (delta * alpha ** 3)
    return p_lo, p_hi


@given(st.floats(0.01, 1.0), st.floats(0.0, 5.0), st.floats(0.1, 10.0), st.floats(1.0, 20.0),
       st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_p_bounds_closed_form(alpha, beta, delta, T, phi, p0):
    got = an.theoretical_p_bounds(alpha, beta, 1.0, delta, T, phi, p0)
    assert got == pytest.approx(_bounds_oracle(alpha, beta, delta, T, phi, p0), rel=1e-12)
    # gamma does not enter; beta = 0 gives the uninflated upper bound
    assert an.theoretical_p_bounds(alpha, beta, 7.0, delta, T, phi, p0) == got
    lo0, hi0 = an.theoretical_p_bounds(alpha, 0.0, 1.0, delta, T, phi, p0)
    assert hi0 == pytest.approx(np.exp(2 * alpha * T) / delta, rel=1e-12)
    assert got[1] >= hi0


def test_p_bounds_matrix_prior_and_errors():
    lo, _ = an.theoretical_p_bounds(0.1, 0.0, 1.0, 1.0, 10.0, 2.0, np.diag([0.5, 4.0]))
    assert lo == pytest.approx(1.0 / (2.0 + 40.0))
    with pytest.raises(NotPersistentlyExcitingError):
        an.theoretical_p_bounds(0.1, 0.0, 1.0, 0.0, 10.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        an.theoretical_p_bounds(0.0, 0.0, 1.0, 1.0, 10.0, 1.0, 1.0)


def test_verify_p_bounds():
    t = np.arange(0, 11.0)
    P = np.repeat(np.eye(2)[None], 11, axis=0)
    rep = an.verify_p_bounds(t, P, (0.5, 2.0), 3.0)
    assert rep.passed and rep.first_violation_t is None
    assert rep.margin_lo == pytest.approx(0.5) and rep.margin_hi == pytest.approx(1.0)
    P[7] = np.diag([0.0, 1.0])
    rep = an.verify_p_bounds(t, P, (0.5, 2.0), 3.0)
    assert not rep.passed and rep.first_violation_t == 7.0
    # violations before the window length are not counted
    P[7] = np.eye(2)
    P[1] = np.diag([0.0, 1.0])
    assert an.verify_p_bounds(t, P, (0.5, 2.0), 3.0).passed
    assert an.min_eig_trajectory(P)[1] == 0.0


# -- contraction ----------------------------------------------------------------------

def test_hh_internal_rate(hh):
    rep = an.internal_contraction_rate(hh[0])
    assert rep.lambda_w == pytest.approx(2 / 8.6, abs=1e-12)
    assert sorted(rep.rates) == pytest.approx(sorted([2 / 0.5, 2 / 8.6, 2 / 5.8]))


def test_hco_synaptic_rate(hco):
    rep = an.internal_contraction_rate(hco[0])
    syn = [r for lab, r in zip(rep.labels, rep.rates) if ".s_" in lab]
    assert syn == pytest.approx([0.2, 0.2])
    assert rep.lambda_w == pytest.approx(min(rep.rates))


def test_output_margin_positive(hh):
    m = compile_model(*hh)
    # the leak alone gives -dv'/dv >= mu_L / c everywhere
    assert an.output_contraction_margin(m) >= 2 * 0.3 - 1e-12


def test_epsilon_formula():
    assert an.epsilon_formula(0.0, 0.2, 1.0, np.eye(3), 2.0) == pytest.approx(0.2 * 1.0 / 4.0)
    e = an.epsilon_formula(0.1, 0.2, 1.0, np.diag([2.0, 3.0]), 0.5)
    assert e == pytest.approx(0.1 * 0.9 * 2.0 / 0.25)
    assert an.epsilon_formula(0.1, 0.2, 1.0, 1.0, 0.5, zeta=0.0) == pytest.approx(0.1 * 0.9 / 0.25)
    assert an.epsilon_formula(0.1, 0.2, 1.0, 1.0, 0.5, zeta=0.5) == pytest.approx(0.09)
    with pytest.raises(InfeasibleRateError):
        an.epsilon_formula(0.3, 0.2, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        an.epsilon_formula(0.1, 0.2, 1.0, 1.0, 0.5, zeta=1.0)


def test_metric_identity_case():
    lo, hi = an.metric_eigen_bounds(np.zeros((1, 2)), np.eye(2), 1.0, 1.0, np.eye(3))
    assert (lo, hi) == pytest.approx((1.0, 1.0))


@given(arrays(float, (2, 3), elements=finite), arrays(float, 5, elements=finite),
       st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_metric_quadratic_form(psi, x, gamma, eps):
    # x^T M x = eps |x_v - Psi th / g|^2 + |x_w - Psi_w th / g|^2_{M_w} + eps th^T (g P)^{-1} th
    P = np.diag([1.0, 2.0, 0.5])
    M_w = np.array([[2.0]])
    psi_w = np.array([[0.3, -0.2, 0.1]])
    M = an.assemble_metric(psi[:1], P, gamma, eps, M_w, psi_w)
    xv, xw, th = x[:1], x[1:2], x[2:]
    ev = xv - psi[:1] @ th / gamma
    ew = xw - psi_w @ th / gamma
    q = eps * ev @ ev + 2.0 * ew @ ew + eps * th @ np.linalg.solve(gamma * P, th)
    assert x @ M @ x == pytest.approx(q, rel=1e-9, abs=1e-9)
    assert np.allclose(M, M.T)


def test_metric_pipeline_on_hh_run(hh, spiking_run):
    m = compile_model(*hh)
    obs = RlsObserver(theta0=[2.0, 78.0, 78.0, 10.0], v0=-30.0, w0=[0, 0, 0],
                      record_stride=500).fit(spiking_run.u, spiking_run.y)
    st_ = RlsObserverState.from_flat(obs.history_, 1, 3, 4)
    J = an.sup_jacobian_norm(m, spiking_run.v[::50], spiking_run.w[::50], None, m.theta_true)
    assert J > 0
    lam_w = an.internal_contraction_rate(hh[0]).lambda_w
    eps = an.epsilon_formula(0.05, lam_w, 1.0, np.eye(3), J)
    lo, hi = an.metric_eigen_bounds(st_.Psi[1:], st_.P[1:], 1.0, eps, np.eye(3))
    assert 0 < lo <= hi < np.inf


# -- rate fits and reports ------------------------------------------------------------

@given(st.floats(0.01, 2.0), st.floats(0.1, 100.0))
def test_rate_fit_exact_exponential(rate, amp):
    t = np.linspace(0, 10, 201)
    fit = an.convergence_rate_fit(t, amp * np.exp(-rate * t))
    assert fit.rate == pytest.approx(rate, rel=1e-8)
    assert fit.r2 == pytest.approx(1.0)


def test_rate_fit_window_and_vector_error():
    t = np.linspace(0, 10, 101)
    err = np.column_stack([np.exp(-t), np.zeros_like(t)])
    fit = an.convergence_rate_fit(t, err, window=(5.0, 10.0))
    assert fit.rate == pytest.approx(1.0) and fit.window == (5.0, 10.0)
    with pytest.raises(ValueError):
        an.convergence_rate_fit(t, err, window=(20.0, 30.0))


def test_report_is_json(tmp_path):
    pe = an.pe_gramian(np.ones(101), 0.1, 2.0)
    rep = an.diagnostics_report(pe=pe, extra={"x": np.float64(np.inf), "n": np.int64(3)})
    an.write_report(tmp_path / "d.json", rep)
    back = json.loads((tmp_path / "d.json").read_text())
    assert back["pe"]["is_pe"] is True and back["x"] == "inf" and back["n"] == 3
