import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seqdet.hilbert import HilbertSpace, detector_space

settings.register_profile("seqdet", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("seqdet")


def random_density(dim, rng, rank=None):
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(dim, rng):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_space():
    return detector_space(6, with_source=True)


@pytest.fixture
def qubit_space():
    return HilbertSpace((2, 3, 4), ("source", "atom", "resonator"))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
