import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the assertion still decides the test."""

    def report(number, title, ok, detail=""):
        _RESULTS.append((number, title, bool(ok), detail))
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    order = lambda r: (int(str(r[0]).rstrip("b")), str(r[0]))  # noqa: E731
    for number, title, ok, detail in sorted(_RESULTS, key=order):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {str(number):>2} {status}  {title}: {detail}")
