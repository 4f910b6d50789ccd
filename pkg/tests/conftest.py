import numpy as np
import pytest

from scenario import CRITERIA


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
