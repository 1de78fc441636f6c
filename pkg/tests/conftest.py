"""Shared fixtures and the acceptance-gate summary.

Tests marked ``@pytest.mark.criterion("<name>")`` are acceptance-gate
tests; after the run, one PASS/FAIL line per criterion is printed so the
gate is auditable at a glance. A criterion passes only if every test
carrying its mark passed.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): label a test as part of an acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker:
        report.criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = defaultdict(lambda: {"passed": 0, "failed": 0, "skipped": 0})
    for bucket, key in (
        ("passed", "passed"),
        ("failed", "failed"),
        ("error", "failed"),
        ("skipped", "skipped"),
    ):
        for report in terminalreporter.stats.get(bucket, []):
            name = getattr(report, "criterion", None)
            if name is None:
                continue
            if bucket == "passed" and getattr(report, "when", "call") != "call":
                continue
            results[name][key] += 1
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(results):
        counts = results[name]
        if counts["failed"]:
            verdict = "FAIL"
        elif counts["passed"]:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        terminalreporter.write_line(
            f"{verdict}  {name}  "
            f"({counts['passed']} passed, {counts['failed']} failed, "
            f"{counts['skipped']} skipped)"
        )
