import numpy as np
import pytest

from afdetect.autodiff import kernels

_CRITERIA = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            number, title = mark.args
            _CRITERIA.setdefault(number, {"title": title, "outcomes": []})


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    mark = report.keywords.get("acceptance")
    if mark is None:
        return
    for number, entry in _CRITERIA.items():
        if f"criterion_{number}_" in report.nodeid:
            entry["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            verdict = "NOT RUN"
        elif "failed" in outcomes:
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIPPED"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number}: {verdict:8s} {entry['title']}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    prev = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)
