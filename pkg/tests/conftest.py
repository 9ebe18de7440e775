import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the verdict so tests can assert on it."""

    def record(cid: str, passed: bool, detail: str) -> bool:
        passed = bool(passed)
        _RESULTS.append((cid, passed, detail))
        print(f"{'PASS' if passed else 'FAIL'}  criterion {cid}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, passed, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {cid}: {detail}")
