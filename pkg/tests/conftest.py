import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cauchytime.causal import build_causal_graph
from cauchytime.spacetime import ModelSpec, build_group, build_model

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mink21():
    st = build_model(ModelSpec("Minkowski2d", (21, 21)))
    return st, build_causal_graph(st, 2)


@pytest.fixture(scope="session")
def mink41():
    st = build_model(ModelSpec("Minkowski2d", (41, 41), (-2, 2), (-2, 2)))
    return st, build_causal_graph(st, 2)


@pytest.fixture(scope="session")
def diamond41():
    st = build_model(ModelSpec("DiamondMinkowski", (41, 41)))
    return st, build_causal_graph(st, 2)


@pytest.fixture(scope="session")
def cyl():
    """Flat cylinder, circumference 8, Z4 rotations."""
    st = build_model(ModelSpec("CylinderProduct", (31, 40), (-1.5, 1.5), circumference=8.0))
    return st, build_causal_graph(st, 2), build_group(st, rotation=4)


@pytest.fixture(scope="session")
def cyl_tall():
    """Circumference 4, t in [-3, 3], h_t = h_x = 0.1, Z4 rotations."""
    st = build_model(ModelSpec("CylinderProduct", (61, 40), (-3, 3), circumference=4.0))
    return st, build_causal_graph(st, 2), build_group(st, rotation=4)


@pytest.fixture(scope="session")
def warp_cyl():
    st = build_model(ModelSpec("ConformalWarp", (31, 40), (-1.5, 1.5), circumference=8.0, periodic=True,
                               warp="1 + 0.3*sin(pi*x/4)**2"))
    return st, build_causal_graph(st, 2), build_group(st, rotation=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
