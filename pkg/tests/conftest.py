import pytest

from lgmvu.apps import load_example


@pytest.fixture
def fig7():
    return load_example("fig7-shape-colour")


@pytest.fixture
def counter():
    return load_example("shared-counter")


@pytest.fixture
def relay():
    return load_example("drawing-relay")


# -- acceptance report -------------------------------------------------------------

_criteria: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    if failed or (report.when == "call" and number not in _criteria):
        _criteria[number] = ("FAIL" if failed else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        verdict, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
