from pathlib import Path

import pytest

from vaemhn.data import load_mnist_dir

DESK_DATA = Path(__file__).resolve().parents[1] / "data" / "desk-mnist"

# filled by the acceptance suite, printed once at the end of the session
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def desk_data():
    return load_mnist_dir(DESK_DATA)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
