import numpy as np
import pytest

from acceptance_log import RESULTS
from loadbayes.feeder import load_feeder_table


@pytest.fixture(scope="session")
def feeder():
    return load_feeder_table()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        passed, title, detail = RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}")
