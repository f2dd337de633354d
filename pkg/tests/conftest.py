"""Acceptance-criterion reporting.

Tests marked ``acceptance`` get a ``criterion`` fixture: a dict whose
``detail`` entry is shown next to the test's PASS/FAIL line in the terminal
summary, so the verdicts appear even without ``-s``.
"""
import pytest

_VERDICTS = []


@pytest.fixture
def criterion(request):
    info = {"detail": ""}
    request.node._criterion = info
    return info


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        name = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = getattr(item, "_criterion", {}).get("detail", "")
        verdict = "PASS" if report.passed else "FAIL"
        _VERDICTS.append(f"{verdict}  {name}" + (f"  [{detail}]" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
