import pytest
from hypothesis import HealthCheck, settings

from kit3wm.dispersion import dispersion_relation
from kit3wm.presets import REFERENCE_CELL, REFERENCE_LOADING

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "stress", deadline=None, max_examples=500, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def reference_table():
    return dispersion_relation(REFERENCE_CELL, REFERENCE_LOADING)


@pytest.fixture
def acceptance_line():
    """Record one summary line per acceptance criterion; printed at the end of the run."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
