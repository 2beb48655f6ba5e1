from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_LINES: list[str] = []


@pytest.fixture
def report(request):
    """report(ok, text) records one acceptance line, printed live and again
    in the terminal summary."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(ok: bool, text: str):
        line = f"[{'PASS' if ok else 'FAIL'}] {text}"
        _LINES.append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
