import pytest

from prwtail.model import canonical_model, two_point_model

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def canon():
    return canonical_model()


@pytest.fixture(scope="session")
def two_point():
    return two_point_model()


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
