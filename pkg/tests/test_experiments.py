import json

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from neuroadapt.errors import ConfigError
from neuroadapt.experiments import (ScenarioConfig, apply_mismatch, build_plant, list_scenarios,
                                    load_scenario, run_scenario, signal_from_config,
                                    simulate_plant, summarize)
from neuroadapt.experiments.cli import main
from neuroadapt.integrator import read_csv
from neuroadapt.model.spec import as_network

SHIPPED = ["fig1-spike", "fig23-landscape", "fig4-hh-noiseless", "fig4-hh-spiking",
           "fig5a-hh-noisy", "fig5b-hh-noisy", "fig67-hco"]


def small_hco(**over):
    d = {
        "name": "hco-short", "task": "simulate", "seed": 3,
        "model": {"preset": "hco"},
        "input": {"kind": "constant", "value_uA_per_cm2": -0.65},
        "plant": {"x0": [-60.0, -50.0] + [0.2] * 12, "t_end_ms": 30.0, "dt_ms": 0.01},
        "noise": {"sigma_mV": 2.0}, "mismatch": {"fraction": 0.01},
        "outputs": {"csv_stride_ms": 0.1},
    }
    d.update(over)
    return ScenarioConfig.from_dict(d)


# -- config --------------------------------------------------------------------------

def test_shipped_scenarios_listed_and_valid():
    assert sorted(list_scenarios()) == sorted(SHIPPED)
    for name in SHIPPED:
        load_scenario(name).validate()


@pytest.mark.parametrize("name", SHIPPED)
def test_config_roundtrip(name, tmp_path):
    cfg = load_scenario(name)
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml())
    again = ScenarioConfig.load(path)
    assert again.to_dict() == cfg.to_dict()
    assert ScenarioConfig.from_dict(yaml.safe_load(cfg.to_yaml())).to_dict() == cfg.to_dict()


def test_config_errors():
    with pytest.raises(ConfigError):
        load_scenario("no-such-scenario")
    with pytest.raises(ConfigError):
        small_hco(task="fly")
    with pytest.raises(ConfigError):
        signal_from_config({"kind": "sine", "amplitude": 1.0})
    with pytest.raises(ConfigError):
        signal_from_config({"kind": "sawtooth"})


def test_signal_units():
    s = signal_from_config({"kind": "sine", "amplitude_uA_per_cm2": 2.0, "period_ms": 8.0})
    assert s(2.0) == pytest.approx(2.0)
    c = signal_from_config({"kind": "constant", "value_mS_per_cm2": 0.11}, unit="mS_per_cm2")
    assert c(123.0) == 0.11


def test_overrides():
    cfg = small_hco(noise={"sigma_mV": 2.0, "seed": 11})
    assert cfg.seeds()[0] == 11
    o = cfg.with_overrides(seed=5, dt_ms=0.02)
    assert o.seed == 5 and o.dt == 0.02 and o.seeds()[0] != 11
    assert cfg.seed == 3 and cfg.dt == 0.01


# -- mismatch and seeds --------------------------------------------------------------------

def _constants(spec):
    out = []
    for nrn in as_network(spec).neurons:
        for cur in nrn.currents:
            for kin in (cur.m, cur.h):
                if kin is not None:
                    out += [kin.rho, kin.kappa, kin.tau_min, kin.tau_max, kin.zeta, kin.chi]
        for syn in nrn.synapses:
            k = syn.kinetics
            out += [k.rho, k.kappa, k.a, k.b]
    return np.array(out)


def _fixed(spec):
    out = []
    for nrn in as_network(spec).neurons:
        out.append(nrn.c)
        for cur in nrn.currents:
            out += [cur.mu, cur.nu]
    return np.array(out)


def test_mismatch_zero_is_identity(hco):
    assert apply_mismatch(hco[0], 0.0, seed=1) is hco[0]


@given(st.integers(0, 2 ** 32 - 1))
def test_mismatch_bounds_and_determinism(hco, seed):
    base = _constants(hco[0])
    a = apply_mismatch(hco[0], 0.01, seed=seed)
    b = apply_mismatch(hco[0], 0.01, seed=seed)
    assert np.array_equal(_constants(a), _constants(b))
    ratio = _constants(a) / base
    assert np.all(np.abs(ratio - 1.0) <= 0.01)
    assert np.array_equal(_fixed(a), _fixed(hco[0]))


def test_noise_and_mismatch_streams_independent():
    a = small_hco(mismatch={"fraction": 0.01, "seed": 1})
    b = small_hco(mismatch={"fraction": 0.01, "seed": 2})
    ta = simulate_plant(a, build_plant(a))
    tb = simulate_plant(b, build_plant(b))
    assert not np.array_equal(ta.v, tb.v)
    # same noise realization on top of different plants
    assert np.allclose(ta.y - ta.v, tb.y - tb.v, atol=1e-12)
    c = small_hco(noise={"sigma_mV": 2.0, "seed": 9}, mismatch={"fraction": 0.01, "seed": 1})
    tc = simulate_plant(c, build_plant(c))
    assert np.array_equal(ta.v, tc.v)
    assert not np.allclose(ta.y, tc.y)


# -- runs ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def fig4_runs(tmp_path_factory):
    d1 = tmp_path_factory.mktemp("a")
    d2 = tmp_path_factory.mktemp("b")
    cfg = load_scenario("fig4-hh-spiking")
    return run_scenario(cfg, d1), run_scenario(cfg, d2), d1, d2


def test_rerun_is_bitwise_reproducible(fig4_runs):
    _, _, d1, d2 = fig4_runs
    for f in ("trajectory.csv", "estimates.csv", "diagnostics.json"):
        assert (d1 / f).read_bytes() == (d2 / f).read_bytes()


def test_summary_recomputed_from_csv(fig4_runs):
    r, _, d1, _ = fig4_runs
    disk = json.loads((d1 / "summary.json").read_text())
    again = summarize(d1, "fig4-hh-spiking", r.config.seed, r.config.dt,
                      r.config.outputs.get("summary_window_ms", 1.0))
    disk.pop("wall_time_ms")
    again.pop("wall_time_ms", None)
    assert json.loads(json.dumps(again)) == disk
    assert max(disk["rel_errors"].values()) < 0.05


def test_estimates_csv_layout(fig4_runs):
    _, _, d1, _ = fig4_runs
    names, data = read_csv(d1 / "estimates.csv")
    assert names[0] == "t"
    assert "true:mu_Na/c" in names and "vhat_0" in names
    assert data[-1, 0] == pytest.approx(250.0)


def test_simulate_task_writes_trajectory(tmp_path):
    res = run_scenario(small_hco(), tmp_path)
    names, data = read_csv(tmp_path / "trajectory.csv")
    assert names[:3] == ["t", "v_0", "v_1"] and names[-2:] == ["y_0", "y_1"]
    assert len(names) == 3 + 12 + 4
    assert data.shape[0] == 301
    assert "estimates" not in res.paths


# -- CLI -----------------------------------------------------------------------------

def test_cli_lists(capsys):
    assert main(["list-presets"]) == 0
    assert set(capsys.readouterr().out.split()) == {"hh", "hco"}
    assert main(["list-scenarios"]) == 0
    assert "fig67-hco" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["estimate", "no-such-scenario"]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: bad\ntask: estimate\nmodel: {preset: hh}\nplant: {t_end_ms: -1}\n")
    assert main(["simulate", str(bad)]) == 1
    # an explicit step far beyond RK4 stability for the fast sodium gate
    assert main(["simulate", "fig4-hh-spiking", "--dt", "1.0", "--out-dir", str(tmp_path)]) == 2
    assert "[fig4-hh-spiking]" in capsys.readouterr().err


def test_cli_estimate_and_diagnose(tmp_path, capsys):
    assert main(["estimate", "fig4-hh-spiking", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "mu_Na/c" in out
    run = tmp_path / "fig4-hh-spiking"
    assert main(["diagnose", str(run)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["P_positive_definite"] == [True]
    assert rep["final_abs_error"] < 5.0
    assert main(["diagnose", str(run / "trajectory.csv")]) == 0
    capsys.readouterr()
    assert main(["diagnose", str(tmp_path)]) == 1
