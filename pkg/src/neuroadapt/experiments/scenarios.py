"""Running scenarios end to end and writing their artifacts.

Every run writes ``trajectory.csv`` (the plant and the measurement),
``estimates.csv`` or ``landscape.csv`` when the task produces them,
``diagnostics.json`` and ``summary.json``. Summary metrics are computed by
:func:`summarize` from the CSV files themselves, so re-running it on the
files reproduces the summary exactly.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import analysis as an
from ..batch import BatchLeastSquares, batch_ls_solve, cost_landscape
from ..errors import ConfigError, NotPersistentlyExcitingError
from ..integrator import Trajectory, read_csv, simulate, trajectory_columns, write_csv
from ..model import as_network, compile_model, override_conductances
from ..observers import AugmentedObserver, NetworkObserver, ReducedObserver, RlsObserver
from ..signals import ParameterSchedule
from .config import ScenarioConfig, signal_from_config

log = logging.getLogger(__name__)

_GATE_FIELDS = ("rho", "kappa", "tau_min", "tau_max", "zeta", "chi")
_SYN_FIELDS = ("rho", "kappa", "a", "b")


# ----------------------------------------------------------------------------
# plant construction


def apply_mismatch(spec, fraction, seed=None, rng=None):
    """Perturb every internal-dynamics constant by a factor ``1 + U(-fraction, fraction)``.

    Gating and synaptic kinetics of each neuron get independent draws, in a
    fixed order (neurons, then currents m before h, then synapses). The
    voltage equation (capacitance, conductances, reversal potentials) is
    left alone. ``fraction = 0`` returns the spec unchanged.
    """
    if fraction < 0:
        raise ConfigError("mismatch fraction must be >= 0")
    spec = as_network(spec)
    if fraction == 0:
        return spec
    rng = np.random.default_rng(seed) if rng is None else rng

    def bump(kin, names):
        draws = 1.0 + rng.uniform(-fraction, fraction, len(names))
        return replace(kin, **{n: getattr(kin, n) * f for n, f in zip(names, draws)})

    neurons = []
    for nrn in spec.neurons:
        currents = []
        for cur in nrn.currents:
            m = bump(cur.m, _GATE_FIELDS) if cur.p > 0 else cur.m
            h = bump(cur.h, _GATE_FIELDS) if cur.q > 0 else cur.h
            currents.append(replace(cur, m=m, h=h))
        synapses = tuple(replace(s, kinetics=bump(s.kinetics, _SYN_FIELDS)) for s in nrn.synapses)
        neurons.append(replace(nrn, currents=tuple(currents), synapses=synapses))
    return replace(spec, neurons=tuple(neurons))


def burn_in_state(spec, x0, u, t_end, dt=0.01, mu_override=None):
    """Final state of a settling run, used as the initial condition of the real one."""
    spec = as_network(spec)
    if mu_override:
        spec = override_conductances(spec, mu_override)
    n_steps = int(round(t_end / dt))
    tr = simulate(spec, x0, u, t_end, dt, w_stride=n_steps)
    return tr.state(1)


@dataclass
class PlantSetup:
    spec_nominal: object
    spec_true: object
    par: object
    x0: np.ndarray
    u: object
    schedule: ParameterSchedule
    noise_seed: int
    mismatch_seed: int


def build_plant(cfg: ScenarioConfig):
    spec, par = cfg.resolve_model()
    spec = as_network(spec)
    noise_seed, mismatch_seed = cfg.seeds()
    u = cfg.input_signal()
    b = cfg.plant.get("burn_in")
    if b is not None:
        bx0 = b.get("x0")
        if bx0 is None:
            raise ConfigError("plant.burn_in needs 'x0'")
        bu = signal_from_config(b["input"], where="plant.burn_in.input") if "input" in b else u
        mu = {}
        for key, val in (b.get("mu_override_mS_per_cm2") or {}).items():
            if key.startswith("n") and "." in key:
                i, name = key[1:].split(".", 1)
                mu[(int(i), name)] = float(val)
            else:
                mu.update({(i, key): float(val) for i in range(spec.n_v)})
        x0 = burn_in_state(spec, np.asarray(bx0, float), bu, float(b["t_end_ms"]), cfg.dt, mu)
    else:
        x0 = np.asarray(cfg.plant["x0"], dtype=float)
    spec_true = apply_mismatch(spec, cfg.mismatch_fraction, seed=mismatch_seed)
    return PlantSetup(spec, spec_true, par, x0, u, ParameterSchedule(cfg.schedule_signals()),
                      noise_seed, mismatch_seed)


def simulate_plant(cfg: ScenarioConfig, setup: PlantSetup) -> Trajectory:
    return simulate(setup.spec_true, setup.x0, setup.u, cfg.t_end, cfg.dt,
                    schedule=setup.schedule or None, noise_sigma=cfg.noise_sigma,
                    seed=setup.noise_seed, w_stride=cfg.csv_stride)


def true_theta_path(model, schedule: ParameterSchedule, t):
    """True ``theta`` at each time in ``t``, following the conductance schedule.

    Every theta column is linear in the conductance it carries, so the path
    is the nominal value plus a per-key slope times the scheduled offset.
    """
    t = np.asarray(t, dtype=float)
    base = model.theta_true
    out = np.tile(base, (t.shape[0], 1))
    spec = as_network(model.spec)
    for key, sig in (schedule.entries.items() if schedule else ()):
        i, name = key
        nrn = spec.neurons[i]
        mu0 = {c.name: c.mu for c in nrn.currents}
        mu0.update({f"{s.name}{s.pre}": s.mu for s in nrn.synapses})
        mu0["L"] = nrn.mu_leak
        slope = model.theta_with({key: mu0[name] + 1.0}) - base
        out += np.outer(sig(t) - mu0[name], slope)
    return out


# ----------------------------------------------------------------------------
# estimators


def _observer(cfg, setup, s):
    model = compile_model(setup.spec_nominal, setup.par)
    v = s["variant"]
    common = dict(dt=cfg.dt, hold=s["hold"])
    if v == "reduced":
        return ReducedObserver(model=model, w0=s["w0"], record_stride=s["record_stride"], **common)
    if v == "rls":
        return RlsObserver(model=model, theta0=s["theta0"], v0=s["v0"], w0=s["w0"],
                           alpha=s["alpha"], gamma=s["gamma"], p0=s["p0"],
                           record_stride=s["record_stride"], **common)
    if v in ("augmented", "output_error"):
        return AugmentedObserver(model=model, theta0=s["theta0"], eta0=s["eta0"], v0=s["v0"],
                                 w0=s["w0"], alpha=s["alpha"], beta=s["beta"], gamma=s["gamma"],
                                 p0=s["p0"], output_error=(v == "output_error"),
                                 record_stride=s["record_stride"], **common)
    if v == "network":
        return NetworkObserver(model=setup.spec_nominal, parametrization=setup.par,
                               theta0=s["theta0"], eta0=s["eta0"], v0=s["v0"], w0=s["w0"],
                               alpha=s["alpha"], beta=s["beta"], gamma=s["gamma"], p0=s["p0"],
                               record_stride=s["record_stride"], **common)
    return BatchLeastSquares(model=model, alpha=s["alpha"], gamma=s["gamma"], p0=s["p0"],
                             theta0=s["theta0"], w0=s["w0"], v0=s["v0"], T=s["T_list"][-1],
                             **common)


def _single_diagnostics(cfg, s, obs, schedule, true_w=None):
    """Excitation, covariance bounds, contraction and rate fit for one observer."""
    model = obs.model_
    t = obs.t_
    dt_rec = cfg.dt * s["record_stride"]
    contraction = an.internal_contraction_rate(model.spec)
    extra = {"record_dt_ms": dt_rec}
    if s["variant"] == "reduced":
        err = obs.history_ - true_w
        fit = an.convergence_rate_fit(t, err, _rate_window(cfg, t))
        return an.diagnostics_report(contraction=contraction, rate_fit=fit, extra=extra)
    st = obs.unpack(obs.history_)
    psi = st.Psi if hasattr(st, "Psi") else st.Psi_v
    P = st.P
    min_eig = an.min_eig_trajectory(P)
    extra["min_eig_P"] = float(min_eig.min())
    extra["P_positive_definite"] = bool(min_eig.min() > 0)
    T = float(cfg.diagnostics.get("pe_window_ms", min(50.0, 0.2 * cfg.t_end)))
    pe = bounds_rep = None
    try:
        pe = an.pe_gramian(psi, dt_rec, T)
        phi_bar = float(np.max(np.linalg.norm(psi, ord=2, axis=(1, 2))))
        extra["phi_bar"] = phi_bar
        bounds = an.theoretical_p_bounds(s["alpha"], s["beta"], s["gamma"], pe.delta, T,
                                         phi_bar, s["p0"])
        bounds_rep = an.verify_p_bounds(t, P, bounds, T)
    except (NotPersistentlyExcitingError, ValueError) as exc:
        extra["p_bounds_skipped"] = str(exc)
    theta_true = true_theta_path(model, schedule, t)
    err = st.theta_hat - theta_true
    if model.n_eta:
        err = np.hstack([err, st.eta_hat - model.eta_true])
    fit = an.convergence_rate_fit(t, err, _rate_window(cfg, t))
    return an.diagnostics_report(pe=pe, p_bounds=bounds_rep, contraction=contraction,
                                 rate_fit=fit, extra=extra)


def _rate_window(cfg, t):
    w = cfg.diagnostics.get("rate_window_ms")
    return (float(w[0]), float(w[1])) if w else (float(t[0]), float(t[-1]))


def _estimate_table(obs, s, schedule, true_w_rows=None):
    """Column names and rows of ``estimates.csv``."""
    if s["variant"] == "network":
        names, cols = ["t"], [obs.t_[:, None]]
        for o in obs.observers_:
            st = o.unpack(o.history_)
            m = o.model_
            names += list(m.theta_labels) + list(m.eta_labels)
            cols += [st.theta_hat, st.eta_hat]
        for o in obs.observers_:
            m = o.model_
            names += [f"true:{lab}" for lab in m.theta_labels]
            cols.append(true_theta_path(m, schedule, obs.t_))
            names += [f"true:{lab}" for lab in m.eta_labels]
            cols.append(np.tile(m.eta_true, (obs.t_.shape[0], 1)))
        names += [f"vhat_{i}" for i in range(len(obs.observers_))]
        cols += [o.history_[:, :1] for o in obs.observers_]
        return names, np.hstack(cols)
    m = obs.model_
    if s["variant"] == "reduced":
        names = ["t"] + list(m.gate_labels) + [f"true:{g}" for g in m.gate_labels]
        return names, np.hstack([obs.t_[:, None], obs.history_, true_w_rows])
    st = obs.unpack(obs.history_)
    names = (["t"] + list(m.theta_labels) + list(m.eta_labels)
             + [f"true:{lab}" for lab in m.theta_labels] + [f"true:{lab}" for lab in m.eta_labels]
             + [f"vhat_{i}" for i in range(m.n_v)])
    rows = np.hstack([obs.t_[:, None], st.theta_hat, st.eta_hat,
                      true_theta_path(m, schedule, obs.t_),
                      np.tile(m.eta_true, (obs.t_.shape[0], 1)), st.v_hat.reshape(-1, m.n_v)])
    return names, rows


# ----------------------------------------------------------------------------
# summary


def summarize(out_dir, scenario=None, seed=None, dt=None, window_ms=None):
    """Summary metrics recomputed from the CSV files in ``out_dir``.

    Missing metadata is taken from an existing ``summary.json``.
    """
    out_dir = Path(out_dir)
    old = {}
    if (out_dir / "summary.json").exists():
        old = json.loads((out_dir / "summary.json").read_text())
    scenario = old.get("scenario") if scenario is None else scenario
    seed = old.get("seed") if seed is None else seed
    dt = old.get("dt") if dt is None else dt
    window_ms = old.get("window_ms", 1.0) if window_ms is None else window_ms
    names, data = read_csv(out_dir / "trajectory.csv")
    t = data[:, names.index("t")]
    vcols = [k for k, n in enumerate(names) if n.startswith("v_")]
    spikes = [an.count_spikes(t, data[:, k]) for k in vcols]
    out = {"scenario": scenario, "seed": seed, "dt": dt, "window_ms": window_ms,
           "params_true": {}, "params_final": {}, "rel_errors": {}, "params_window_mean": {},
           "params_true_window_mean": {}, "window_rel_errors": {}, "spikes": spikes,
           "diagnostics_path": "diagnostics.json",
           "wall_time_ms": old.get("wall_time_ms")}
    est = out_dir / "estimates.csv"
    if est.exists():
        en, ed = read_csv(est)
        te = ed[:, en.index("t")]
        sel = te >= te[-1] - window_ms - 1e-9
        for k, name in enumerate(en):
            if name.startswith("true:") or name == "t" or name.startswith("vhat_") \
                    or name == "T_ms" or name == "min_eig_R":
                continue
            tk = en.index("true:" + name)
            true_f, est_f = float(ed[-1, tk]), float(ed[-1, k])
            true_m, est_m = float(ed[sel, tk].mean()), float(ed[sel, k].mean())
            out["params_true"][name] = true_f
            out["params_final"][name] = est_f
            out["rel_errors"][name] = abs(est_f - true_f) / abs(true_f) if true_f else abs(est_f)
            out["params_window_mean"][name] = est_m
            out["params_true_window_mean"][name] = true_m
            out["window_rel_errors"][name] = abs(est_m - true_m) / abs(true_m) if true_m \
                else abs(est_m)
    land = out_dir / "landscape.csv"
    if land.exists():
        ln, ld = read_csv(land)
        cost = ld[:, ln.index("cost")]
        c = ld[:, ln.index("candidate")]
        jump = int(np.nanargmax(np.abs(np.diff(cost))))
        out["landscape"] = {"max_jump_interval": [float(c[jump]), float(c[jump + 1])],
                            "predictor_spikes": ld[:, ln.index("spikes")].astype(int).tolist()}
    return an._jsonable(out)


# ----------------------------------------------------------------------------
# driver


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trajectory: Trajectory
    summary: dict
    diagnostics: dict
    paths: dict = field(default_factory=dict)
    estimator: object = None
    landscape: object = None
    setup: PlantSetup | None = None


def run_scenario(cfg: ScenarioConfig, out_dir=None, task=None) -> ScenarioResult:
    """Simulate the plant and run the configured task, writing artifacts to ``out_dir``.

    ``task`` overrides the config's task (``simulate`` always works).
    Numerical failures propagate as :class:`~neuroadapt.errors.NumericalError`
    with the scenario name prepended.
    """
    task = cfg.task if task is None else task
    if task not in ("simulate", "estimate", "landscape"):
        raise ConfigError(f"unknown task {task!r}")
    t0 = time.perf_counter()
    try:
        return _run(cfg, out_dir, task, t0)
    except Exception as exc:
        if hasattr(exc, "args") and exc.args and isinstance(exc.args[0], str) \
                and not exc.args[0].startswith(f"[{cfg.name}]"):
            exc.args = (f"[{cfg.name}] {exc.args[0]}",) + exc.args[1:]
        raise


def _run(cfg, out_dir, task, t0):
    setup = build_plant(cfg)
    log.info("%s: simulating %.0f ms at dt=%g", cfg.name, cfg.t_end, cfg.dt)
    tr = simulate_plant(cfg, setup)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "trajectory.csv", *trajectory_columns(tr, cfg.csv_stride))
    diagnostics = {"scenario": cfg.name, "task": task, "noise_seed": setup.noise_seed,
                   "mismatch_seed": setup.mismatch_seed}
    est = land = None
    est_table = None
    if task == "estimate":
        s = cfg.observer_settings()
        est = _observer(cfg, setup, s)
        log.info("%s: running %s estimator", cfg.name, s["variant"])
        est.fit(tr.u, tr.y)
        if s["variant"] == "batch":
            sol = batch_ls_solve(est.dataset_, s["alpha"], s["p0"], s["T_list"], s["theta0"])
            m = est.model_
            true = true_theta_path(m, setup.schedule, np.array(s["T_list"]))
            names = ["t"] + list(m.theta_labels) + [f"true:{lab}" for lab in m.theta_labels]
            est_table = (names + ["min_eig_R"],
                         np.column_stack([sol.T, sol.theta, true,
                                          np.linalg.eigvalsh(sol.R)[:, 0]]))
            diagnostics["batch"] = {"T_ms": sol.T, "min_eig_R": np.linalg.eigvalsh(sol.R)[:, 0],
                                    "cost": sol.cost}
        elif s["variant"] == "reduced":
            rows = np.arange(0, tr.n_steps + 1, s["record_stride"])
            true_w = _true_w_rows(tr, rows)
            est_table = _estimate_table(est, s, setup.schedule, true_w)
            diagnostics.update(_single_diagnostics(cfg, s, est, setup.schedule, true_w))
        elif s["variant"] == "network":
            est_table = _estimate_table(est, s, setup.schedule)
            diagnostics["neurons"] = [_single_diagnostics(cfg, s, o, setup.schedule)
                                      for o in est.observers_]
        else:
            est_table = _estimate_table(est, s, setup.schedule)
            diagnostics.update(_single_diagnostics(cfg, s, est, setup.schedule))
    elif task == "landscape":
        ls = cfg.landscape_settings()
        land = cost_landscape(ls["grid"], tr, setup.spec_true, ls["T"], setup.u,
                              current=ls["current"], neuron=ls["neuron"])
        diagnostics["landscape"] = {"max_jump_interval": land.max_jump_interval,
                                    "all_finite": bool(land.finite.all())}
    wall = (time.perf_counter() - t0) * 1e3
    paths = {}
    window = float(cfg.outputs.get("summary_window_ms", 1.0))
    if out_dir is not None:
        paths["trajectory"] = out_dir / "trajectory.csv"
        if est_table is not None:
            write_csv(out_dir / "estimates.csv", *est_table)
            paths["estimates"] = out_dir / "estimates.csv"
        if land is not None:
            land.write_csv(out_dir / "landscape.csv")
            paths["landscape"] = out_dir / "landscape.csv"
        an.write_report(out_dir / "diagnostics.json", diagnostics)
        paths["diagnostics"] = out_dir / "diagnostics.json"
        (out_dir / "summary.json").unlink(missing_ok=True)
        summary = summarize(out_dir, cfg.name, cfg.seed, cfg.dt, window)
        summary["wall_time_ms"] = wall
        an.write_report(out_dir / "summary.json", summary)
        paths["summary"] = out_dir / "summary.json"
    else:
        summary = {"scenario": cfg.name, "seed": cfg.seed, "dt": cfg.dt, "wall_time_ms": wall,
                   "spikes": [an.count_spikes(tr.t, tr.v[:, i]) for i in range(tr.v.shape[1])]}
    return ScenarioResult(cfg, tr, summary, an._jsonable(diagnostics), paths, est, land, setup)


def _true_w_rows(tr, rows):
    """True gate values at grid rows that fall on the stored ``w`` grid."""
    if np.any(rows % tr.w_stride):
        raise ConfigError("observer.record_stride must be a multiple of the CSV stride "
                          "for the reduced observer")
    return tr.w[rows // tr.w_stride]
