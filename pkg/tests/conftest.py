import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cconvex.geometry import FlatTorus, Hyperbolic2, Sphere2

settings.register_profile(
    "ci", deadline=None, derandomize=True, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    def log(number, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
    return log


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def torus1():
    return FlatTorus((1.0,))


@pytest.fixture(scope="session")
def torus2():
    return FlatTorus((1.0, 1.0))


@pytest.fixture(scope="session")
def sphere():
    return Sphere2(1.0)


@pytest.fixture(scope="session")
def disk():
    return Hyperbolic2()
