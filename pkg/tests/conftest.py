"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end."""
import pytest

_VERDICTS: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by a test")


@pytest.fixture
def verdict(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args

    def record(ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    if number not in _VERDICTS or (report.failed and _VERDICTS[number].startswith("PASS")):
        reason = "passed" if report.passed else f"{call.excinfo.typename}: {call.excinfo.value}".splitlines()[0]
        _VERDICTS[number] = f"{'PASS' if report.passed else 'FAIL'} criterion {number:2d} ({title}): {reason}"


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
