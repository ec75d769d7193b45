"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import pytest

_OUTCOMES = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    n = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    passed = report.passed and _OUTCOMES.get(n, (True, ""))[0]
    _OUTCOMES[n] = (passed, detail or _OUTCOMES.get(n, (True, ""))[1])


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        passed, detail = _OUTCOMES[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
