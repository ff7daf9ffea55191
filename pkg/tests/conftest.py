import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cpstir.core import SeededStream  # noqa: E402

# PASS/FAIL lines from the acceptance run, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def stream(request):
    return SeededStream(20240611, request.node.name)


@pytest.fixture
def acceptance_report():
    def emit(checks):
        for c in checks:
            line = c.line()
            ACCEPTANCE_LINES.append(line)
            print(line)
        return checks
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
