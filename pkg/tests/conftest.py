"""Shared pytest hooks: print the release-gate summary after the run."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    criteria = getattr(module, "CRITERIA", None)
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in criteria:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
