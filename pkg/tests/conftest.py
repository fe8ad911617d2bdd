import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Recorder for one acceptance criterion: ``acceptance(number, name, passed, detail)``."""
    def record(number, name, passed, detail):
        ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
