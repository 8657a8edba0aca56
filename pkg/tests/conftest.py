import pytest

# (criterion number, passed, detail) collected by the acceptance module
VERDICTS = []


@pytest.fixture
def verdict():
    def record(number, passed, detail):
        VERDICTS.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
