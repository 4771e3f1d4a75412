import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dispatchlab.dispatch import GeneratorSpec, RollingConfig
from dispatchlab.network import Network

from .oracles import ACCEPTANCE, M1_DEMAND, m1_generators, m2_case

settings.register_profile("dispatchlab", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dispatchlab")

ACCEPTANCE_COUNT = 11


@pytest.fixture
def m1():
    return Network.single_bus(), m1_generators(), M1_DEMAND.copy()


@pytest.fixture
def m2():
    return m2_case()


@pytest.fixture
def three_gen():
    return (GeneratorSpec("G1", 0, 15.0, 50.0, 25.0),
            GeneratorSpec("G2", 0, 30.0, 40.0, 30.0),
            GeneratorSpec("G3", 0, 60.0, 60.0, 30.0))


@pytest.fixture
def rolling_w1():
    return RollingConfig(horizon=2, window=1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (not evaluated: test errored or was deselected)")


def demand_rows(values):
    return np.asarray(values, dtype=float).reshape(-1, 1)
