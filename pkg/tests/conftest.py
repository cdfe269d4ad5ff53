import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from gravloc.units import reference_setup  # noqa: E402


@pytest.fixture(scope="session")
def setup():
    return reference_setup()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
