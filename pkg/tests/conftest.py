"""Shared test plumbing.

The acceptance suite records one summary line per criterion; printing them
from the terminal-summary hook keeps the pass/fail ledger visible in plain
`pytest -v` output, where per-test stdout is normally swallowed.
"""

import pytest

_ACCEPTANCE = {}


def record_criterion(num: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE[num] = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.fixture
def criterion_recorder():
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[num])
