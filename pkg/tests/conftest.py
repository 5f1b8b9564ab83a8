import re

import pytest

from flexcfe.domain import TimeGrid
from flexcfe.milp import make_solver

# acceptance tests are named test_criterion_<NN>_<slug>
_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_outcomes: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    failed = report.failed or (report.when == "call" and report.skipped)
    if failed:
        _outcomes[key] = "FAIL"
    elif report.when == "call":
        _outcomes.setdefault(key, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (num, slug), verdict in sorted(_outcomes.items()):
        terminalreporter.write_line(f"criterion {num:2d} {slug.replace('_', ' ')}: {verdict}")


@pytest.fixture(scope="session")
def highs():
    return make_solver("external")


@pytest.fixture(scope="session")
def reference():
    return make_solver("reference")


@pytest.fixture
def micro_grid():
    return TimeGrid(60, 1, 4, 2)


@pytest.fixture
def hour_grid():
    """Two days at hourly resolution: small enough for fast MILPs."""
    return TimeGrid(60, 1, 24, 2)
