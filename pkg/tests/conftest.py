import numpy as np
import pytest

from affdim import fixtures
from affdim.ifs import sample_attractor


@pytest.fixture(scope="session")
def f1():
    return fixtures.f1()


@pytest.fixture(scope="session")
def f2():
    return fixtures.f2()


@pytest.fixture(scope="session")
def f3():
    return fixtures.f3()


@pytest.fixture(scope="session")
def f4():
    return fixtures.f4()


@pytest.fixture(scope="session")
def f1_samples(f1):
    return sample_attractor(f1, 200_000, depth_target=21, seed=11)


@pytest.fixture(scope="session")
def f2_samples(f2):
    return sample_attractor(f2, 50_000, depth_target=21, seed=12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance_line():
    def record(number, line):
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
