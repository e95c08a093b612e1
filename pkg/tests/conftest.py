import numpy as np
import pytest

from sfipm.ledger import CostLedger
from sfipm.problems import SyQpSpec, gen_syqp

_ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: spec-level acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    """Record one summary line per criterion; printed at the end of the run."""

    def log(number, passed, detail):
        verdict = "REPORTED" if passed is None else ("PASS" if passed else "FAIL")
        line = f"CRITERION {number}: {verdict} - {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return log


@pytest.fixture
def ledger():
    return CostLedger()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def syqp_8_4():
    return gen_syqp(SyQpSpec(n=8, m1=4, seed=0))


@pytest.fixture(scope="session")
def syqp_4_2():
    return gen_syqp(SyQpSpec(n=4, m1=2, seed=0))
