import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SESSION = {"start": time.time(), "outcomes": {}, "lines": []}


def pytest_sessionstart(session):
    SESSION["start"] = time.time()


def pytest_collection_modifyitems(session, config, items):
    # acceptance criteria run last so the invariant-suite criterion can see the other outcomes
    items.sort(key=lambda it: os.path.basename(str(it.fspath)) == "test_acceptance.py")


def pytest_runtest_logreport(report):
    if report.when == "call" or report.failed:
        prev = SESSION["outcomes"].get(report.nodeid)
        if prev != "failed":
            SESSION["outcomes"][report.nodeid] = report.outcome


@pytest.fixture
def report():
    def emit(crit: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {crit:2d}: {detail}"
        SESSION["lines"].append(line)
        print(line)

    return emit


@pytest.fixture
def session_state():
    return SESSION


def pytest_terminal_summary(terminalreporter):
    if SESSION["lines"]:
        terminalreporter.section("acceptance criteria")
        for line in SESSION["lines"]:
            terminalreporter.write_line(line)
