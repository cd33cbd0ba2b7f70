"""Test-session plumbing.

Acceptance tests (tests/test_acceptance.py) each carry a one-line
criterion description in their docstring; a terminal-summary hook
prints one PASS/FAIL line per criterion so the gate is readable
straight off the pytest output.
"""

import sys

_acceptance_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call":
        if report.skipped:
            _acceptance_results[report.nodeid] = "SKIP"
        else:
            _acceptance_results[report.nodeid] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup":
        if report.failed:
            _acceptance_results[report.nodeid] = "FAIL"
        elif report.skipped:
            _acceptance_results[report.nodeid] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance_results):
        label = nodeid.split("::")[-1].replace("test_criterion_", "criterion ")
        terminalreporter.write_line(
            f"ACCEPTANCE {label}: {_acceptance_results[nodeid]}"
        )


def pytest_addoption(parser):
    parser.addoption(
        "--skip-slow",
        action="store_true",
        default=False,
        help="skip the long end-to-end acceptance run",
    )
