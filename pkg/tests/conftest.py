import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from hiercos.hierarchy import read_hierarchy
from hiercos.subspace import assign_bases

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def t1():
    return read_hierarchy(FIXTURES / "t1.tsv")


@pytest.fixture
def t1_idx(t1):
    return assign_bases(t1)


@pytest.fixture
def worked():
    return read_hierarchy(FIXTURES / "worked_example.tsv")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance verdict; returns whether it passed."""
    log = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {name}" + (f" ({detail})" if detail else "")
        log.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


_VERDICTS = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash.get(_VERDICTS, [])
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(verdicts):
            terminalreporter.write_line(line)
