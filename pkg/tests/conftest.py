import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def report_criterion():
    def record(number: int, name: str, passed: bool, detail: str, seconds: float):
        line = f"{'PASS' if passed else 'FAIL'} C{number:02d} {name}: {detail} [{seconds:.1f}s]"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return line

    return record
