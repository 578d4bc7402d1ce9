import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from irsbreath.scenario_io import builtin_pattern, builtin_scenario

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def canonical():
    return builtin_scenario("canonical")


@pytest.fixture(scope="session")
def hold_pattern():
    return builtin_pattern("breath_hold")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
