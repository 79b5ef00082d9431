import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record acceptance outcomes; one combined line per criterion is printed in the terminal summary."""

    def record(number, status, detail):
        _CRITERIA.setdefault(number, []).append((status, detail))
        print(f"criterion {number:2d}: {status}  {detail}")

    return record


def _overall(statuses):
    if "FAIL" in statuses:
        return "FAIL"
    if all(s == "PASS" for s in statuses):
        return "PASS"
    if all(s == "SKIP" for s in statuses):
        return "SKIP"
    return "PARTIAL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        status = _overall([s for s, _ in parts])
        detail = " | ".join(f"[{s}] {d}" if len(parts) > 1 else d for s, d in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {status:<7} {detail}")
