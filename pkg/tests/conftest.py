import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


CRITERIA = {}


def record_criterion(k, ok, detail):
    """Store and print one acceptance line; the summary hook repeats them in order."""
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    CRITERIA[k] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
