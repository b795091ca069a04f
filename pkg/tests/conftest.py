from __future__ import annotations

import pytest

# (criterion, label, passed, detail) lines filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: list[tuple[str, str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion and print it."""

    def record(criterion: str, label: str, passed: bool, detail: str) -> bool:
        passed = bool(passed)
        ACCEPTANCE_LINES.append((criterion, label, passed, detail))
        print(f"ACCEPTANCE {criterion} {'PASS' if passed else 'FAIL'} {label}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, label, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion} {label}: {detail}")
    failed = sum(not p for _, _, p, _ in ACCEPTANCE_LINES)
    terminalreporter.write_line(f"{len(ACCEPTANCE_LINES) - failed} passed, {failed} failed")
