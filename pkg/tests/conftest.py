import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_acceptance = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _acceptance.append((status, doc))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc in _acceptance:
        terminalreporter.write_line(f"[{status}] {doc}")
