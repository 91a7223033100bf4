import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SUITE_BUDGET_S = 300.0
_results: dict[str, tuple[bool, str]] = {}
_start = {}


def pytest_sessionstart(session):
    _start["t"] = time.perf_counter()


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(key, passed, detail)``."""

    def record(key: str, passed: bool, detail: str = ""):
        _results[key] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    elapsed = time.perf_counter() - _start.get("t", time.perf_counter())
    full_run = config.getoption("keyword") == "" and not config.getoption("markexpr")
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_results):
        ok, detail = _results[key]
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {key}  {detail}")
    ok8 = elapsed < SUITE_BUDGET_S
    tr.write_line(f"{'PASS' if ok8 else 'FAIL'}  C8 suite runtime  {elapsed:.1f} s "
                  f"(budget {SUITE_BUDGET_S:.0f} s{'' if full_run else ', partial run'})")


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _start.get("t", time.perf_counter())
    if elapsed >= SUITE_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1
