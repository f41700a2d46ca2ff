import pytest

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line: ``record_criterion(number, passed, detail)``."""

    def record(number, passed, detail=""):
        _CRITERIA.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}")
