import pytest

ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict for the terminal summary and echo it."""

    def record(key, passed, detail):
        line = f"criterion {key}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE[key] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abc")), k)):
        terminalreporter.write_line(ACCEPTANCE[key])
