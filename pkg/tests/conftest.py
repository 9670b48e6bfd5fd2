import numpy as np
import pytest

from albedo_lab.coefficients import make_phantom
from albedo_lab.geometry import DomainConfig
from albedo_lab.transport import Lattice

# resolution used by the slower integration tests
N_TEST = 17

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def domain():
    return DomainConfig()


@pytest.fixture(scope="session")
def lattice17(domain):
    return Lattice.transport(domain, h=2.0 / (N_TEST - 1))


@pytest.fixture(scope="session")
def phantoms(domain):
    cache = {}

    def get(name, **kw):
        key = (name, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = make_phantom(name, domain, N=N_TEST, **kw)
        return cache[key]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
