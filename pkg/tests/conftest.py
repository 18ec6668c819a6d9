import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(criterion: int, ok: bool, detail: str) -> bool:
        _RESULTS[criterion] = (bool(ok), detail)
        print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_RESULTS):
        ok, detail = _RESULTS[c]
        terminalreporter.write_line(f"criterion {c:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
