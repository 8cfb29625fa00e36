import json
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_record():
    with open(DATA / "fixture_gains.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def good_gains(fixture_record):
    """Hand-tuned gains that complete the OSE schedule."""
    return np.array(fixture_record["gains"], dtype=np.float64)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def tse_best():
    """Best generalising controller of a default-scale two-stage run."""
    with open(DATA / "tse_best.json", encoding="utf-8") as fh:
        return json.load(fh)


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records one acceptance line and asserts it."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
