from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import pytest  # noqa: E402

# Collected (criterion, passed) results from tests/test_acceptance.py, shown
# as a one-line-per-criterion summary at the end of the run.
ACCEPTANCE_RESULTS: dict[str, bool] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ACCEPTANCE_RESULTS[name] else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        label = marker.kwargs.get("label", item.name)
        ACCEPTANCE_RESULTS[label] = report.passed


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(label): acceptance-criterion test, summarized at exit"
    )
