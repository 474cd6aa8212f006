import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from neuroadapt.integrator import simulate
from neuroadapt.model import Parametrization, compile_model, preset
from neuroadapt.signals import InputSignal

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

HH_ETA = [("m_Na", "rho"), ("h_Na", "rho"), ("m_K", "rho")]


@pytest.fixture(scope="session")
def hh():
    return preset("hh")


@pytest.fixture(scope="session")
def hco():
    return preset("hco")


@pytest.fixture(scope="session")
def hh_eta_model(hh):
    return compile_model(hh[0], Parametrization("scaled", eta=HH_ETA))


@pytest.fixture(scope="session")
def spiking_run(hh):
    """60 ms of tonically spiking, noiseless HH data."""
    return simulate(hh[0], [-30.0, 0.5, 0.5, 0.5], InputSignal.sine(3.0, 10.0), 60.0, 0.01)


def random_gate_state(rng, n):
    return rng.uniform(0.0, 1.0, n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ------------------------------------------------------------

def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record_criterion(request):
    """``record(n, ok, detail)`` stores one acceptance line for the terminal summary."""
    def record(n, ok, detail):
        request.config._acceptance[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
