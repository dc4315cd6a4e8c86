import numpy as np
import pytest

from scanstack.core import PolarScan, Pose2D


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_scan(ranges, pose=None, t=0):
    return PolarScan(np.asarray(ranges, dtype=float), pose or Pose2D(0.0, 0.0, 0.0), t)


@pytest.fixture
def empty_scan():
    return make_scan(np.full(360, np.inf))


# one summary line per acceptance criterion, printed after the run
CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, text: str):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {text}"
        CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
