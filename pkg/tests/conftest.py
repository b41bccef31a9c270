import pytest

from shipwright.config import baseline_profile
from shipwright.relation import GenSpec, Order, generate


@pytest.fixture(scope="session")
def baseline():
    return baseline_profile()


@pytest.fixture(scope="session")
def shuffled_1m():
    return generate(GenSpec(10**6, 100, Order.SHUFFLED, seed=5))


@pytest.fixture(scope="session")
def sorted_groups():
    return generate(GenSpec(10**6, 10**4, Order.SORTED_BY_B, seed=0))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[number])
