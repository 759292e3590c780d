"""Collect acceptance outcomes and print one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES: dict[int, tuple[str, list[str]]] = {}
_DETAILS: dict[int, list[str]] = {}


@pytest.fixture
def criterion_log(request):
    """List whose lines are printed under this criterion in the summary."""
    marker = request.node.get_closest_marker("acceptance")
    return _DETAILS.setdefault(marker.args[0] if marker else 0, [])


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")
    config.addinivalue_line("markers", "slow: Monte Carlo runs taking minutes")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        prev = _OUTCOMES.get(number, (title, []))
        prev[1].append(status)
        _OUTCOMES[number] = prev


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, statuses = _OUTCOMES[number]
        if "FAIL" in statuses:
            verdict = "FAIL"
        elif all(s == "PASS" for s in statuses):
            verdict = "PASS"
        else:
            verdict = "SKIP"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
        for line in _DETAILS.get(number, []):
            terminalreporter.write_line(f"    {line}")
