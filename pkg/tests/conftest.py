"""Shared fixtures and the acceptance-line terminal summary."""

from __future__ import annotations

import pytest

_CRITERION_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collector for one pass/fail line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        status = "PASS" if ok else "FAIL"
        _CRITERION_LINES.append(f"criterion {number:2d} {status}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_CRITERION_LINES):
        terminalreporter.write_line(line)
