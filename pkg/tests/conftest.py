import pytest

# Filled by tests/test_acceptance.py; printed once at the end of the run.
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance_report():
    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
