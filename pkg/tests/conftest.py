from datetime import date

import pytest

from benchconc.records import Affiliation, BenchmarkRecord

_ACCEPTANCE: list[tuple[str, str]] = []


def bench(bid, citations=0, stars=0, affs=(), authors=None, released=date(2022, 1, 1), **kw):
    """Compact BenchmarkRecord builder: affs are (author, institution[, country]) tuples."""
    affiliations = tuple(Affiliation(*a) for a in affs)
    if authors is None:
        authors = tuple(dict.fromkeys(a.author for a in affiliations))
    return BenchmarkRecord(bid, f"name {bid}", released, citations, stars,
                           authors=tuple(authors), affiliations=affiliations, **kw)


@pytest.fixture
def small_records():
    return [
        bench("b1", 10, 100, [("ann", "Uni A", "US"), ("bob", "Lab B", "UK")]),
        bench("b2", 3, 0, [("cat", "Uni A", "US")], released=date(2020, 6, 1)),
        bench("b3", 0, 40, [], authors=("dan",), released=date(2023, 3, 1)),
        bench("b4", 50, 5, [("bob", "Lab B", "UK"), ("eve", "Co C", "")]),
    ]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if hasattr(report, "wasxfail"):
            status = "FAIL"
        _ACCEPTANCE.append((marker.args[0], f"{status}  {marker.args[0]}: {marker.args[1]}"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda kv: kv[0]):
        terminalreporter.write_line(line)
