"""Shared test plumbing: acceptance reporting and the logging noise filter."""

import logging

import pytest

_ACCEPTANCE_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    # Task runners log per-example failures; keep test output quiet.
    logging.getLogger("memaug").setLevel(logging.ERROR)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        number, description = marker.args
        _ACCEPTANCE_RESULTS[number] = {
            "description": description,
            "passed": report.passed,
        }


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_RESULTS):
        entry = _ACCEPTANCE_RESULTS[number]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status} - {entry['description']}")
