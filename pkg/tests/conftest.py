import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, passed, detail)."""

    def record(number, passed, detail):
        line = f"criterion {number:>3}: {'PASS' if passed else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
