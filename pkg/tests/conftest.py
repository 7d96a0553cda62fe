import random

import pytest

from groupdiscount import ibdt


@pytest.fixture(scope="session")
def system():
    """One trusted setup with n_max = 10, shared read-only by the tests."""
    pms, kp = ibdt.setup(128, n_max=10, rng=random.Random(1))
    return pms, kp


@pytest.fixture(scope="session")
def keys(system):
    pms, kp = system
    ids = [str(1000 + i) for i in range(10)]
    return {i: ibdt.keygen(pms, kp.mpk, kp.msk, i) for i in ids}


@pytest.fixture
def rng():
    return random.Random(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
