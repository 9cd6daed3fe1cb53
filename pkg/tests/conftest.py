import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from epivisit.disease import DwellSpec, HealthState, default_seir_model  # noqa: E402
from epivisit.population import generate_random_population, generate_smallville  # noqa: E402


@pytest.fixture(scope="session")
def smallville():
    return generate_smallville()


@pytest.fixture(scope="session")
def random_pop():
    return generate_random_population(1000, 50, 42)


@pytest.fixture(scope="session")
def small_random_pop():
    return generate_random_population(200, 12, 7)


@pytest.fixture
def fixed_dwell_model():
    """Default diagram with every dwell fixed at 2 days."""
    d = DwellSpec.fixed(2)
    S, E, Is, Ia, R = HealthState
    return default_seir_model(0.05, {(E, Is): d, (E, Ia): d, (Is, R): d, (Ia, R): d})


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.format_line(n))
