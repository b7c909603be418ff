import pytest

from stmchain.model import symmetric_chain, table_s1_chain


@pytest.fixture(scope="session")
def device():
    return table_s1_chain()


@pytest.fixture(scope="session")
def sym_device():
    return symmetric_chain()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: int(l.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
