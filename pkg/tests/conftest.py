import json
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def golden():
    return json.loads((HERE / "fixtures" / "golden.json").read_text())


def rel_close(a, b, digits=12):
    b = float(b)
    if b == 0:
        return abs(a) < 10.0 ** (-digits)
    return abs(a - b) <= 10.0 ** (-digits) * abs(b)


_ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    """Record the PASS/FAIL line for one acceptance criterion; it is printed now and in the summary."""

    def report(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _ACCEPTANCE_LINES[k] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[k])
