import re

import numpy as np
import pytest

_ACCEPT = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPT[n] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPT):
        verdict = "PASS" if _ACCEPT[n] == "passed" else ("SKIP" if _ACCEPT[n] == "skipped" else "FAIL")
        terminalreporter.write_line(f"criterion {n}: {verdict}")
