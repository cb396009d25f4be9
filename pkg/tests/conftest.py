"""Print one pass/fail line per acceptance criterion at the end of the run."""

import pytest

_DETAILS: dict = {}
_OUTCOMES: dict = {}


@pytest.fixture
def criterion(request):
    """Record free-text details for the criterion checked by this test."""
    lines = []
    _DETAILS[request.node.nodeid] = lines
    return lines.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _OUTCOMES[item.nodeid] = (marker.args[0], rep.outcome)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for nodeid, (num, outcome) in sorted(_OUTCOMES.items(), key=lambda kv: kv[1][0]):
        status = "PASS" if outcome == "passed" else "FAIL"
        details = "; ".join(_DETAILS.get(nodeid, []))
        tr.write_line(f"criterion {num:>2}: {status}  {details}")
