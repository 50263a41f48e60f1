import numpy as np
import pytest

from vibdamage.fem import BeamConfig, assemble_system


@pytest.fixture(scope="session")
def nominal_system():
    return assemble_system(BeamConfig())


@pytest.fixture(scope="session")
def small_system():
    return assemble_system(BeamConfig(elements=10))


@pytest.fixture(scope="session")
def system25():
    return assemble_system(BeamConfig(elements=25, ei=133.0))


@pytest.fixture(scope="session")
def system50():
    return assemble_system(BeamConfig(elements=50, ei=133.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cantilever_frequencies(config, count=3):
    """Analytic Euler-Bernoulli cantilever frequencies in Hz."""
    roots = np.array([1.8751040687, 4.6940911330, 7.8547574382, 10.995540735])[:count]
    omega = roots**2 * np.sqrt(config.ei / (config.mu * config.length**4))
    return omega / (2 * np.pi)


# acceptance results, printed once at the end of the session
ACCEPTANCE = {}


def record_acceptance(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
