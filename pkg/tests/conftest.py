import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record the outcome line for an acceptance criterion."""
    def record(number, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        _CRITERIA.setdefault(number, []).append(f"{status}  {detail}")
        print(f"criterion {number}: {status}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        for line in _CRITERIA[number]:
            terminalreporter.write_line(f"criterion {number:>2}: {line}")
