import re

import pytest
from hypothesis import settings

from cancoord.domain import CfDescriptor, ParameterSpec, build_grid
from cancoord.scenario import REFERENCE_SCENARIO

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_outcomes: dict[int, list[str]] = {}


@pytest.fixture
def txp_grid():
    return build_grid(ParameterSpec("TXP", "dBm", 50, 80, 1))


@pytest.fixture
def mlb_cco():
    return [
        CfDescriptor("MLB", "load", frozenset({"TXP"})),
        CfDescriptor("CCO", "coverage", frozenset({"TXP"})),
    ]


@pytest.fixture
def reference_path():
    return REFERENCE_SCENARIO


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        ok = all(o == "passed" for o in _outcomes[n])
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}")
