import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_verdicts = {}


@pytest.fixture
def verdict():
    """Record one acceptance line; the summary prints them in criterion order."""
    def record(number, ok, detail):
        _verdicts[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_verdicts):
        terminalreporter.write_line(_verdicts[k])
