"""Shared pytest plumbing for the drnash test suite.

The acceptance tests in ``test_acceptance.py`` each verify one advertised
guarantee of the package and report a single pass/fail line.  Those lines are
collected here and replayed in the terminal summary so the gate's outcome is
visible in one block even when pytest captures stdout.
"""

from __future__ import annotations

import pytest

ACCEPTANCE_LINES: list[tuple[int, str]] = []


@pytest.fixture(scope="session")
def acceptance_record():
    """Callable ``record(criterion, passed, detail)`` for the acceptance gate."""

    def record(criterion: int, passed: bool, detail: str) -> None:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append((criterion, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
