"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the summary."""

from collections import defaultdict

_OUTCOMES = defaultdict(list)
_NUMBERS = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _NUMBERS[item.nodeid] = int(mark.args[0])


def pytest_runtest_logreport(report):
    n = _NUMBERS.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        _OUTCOMES[n].append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(set(_NUMBERS.values())):
        runs = _OUTCOMES.get(n, [])
        if not runs:
            status = "NOT RUN"
        elif any(o == "failed" for _, o, _ in runs):
            status = "FAIL"
        elif all(o == "skipped" for _, o, _ in runs):
            status = "SKIP"
        else:
            status = "PASS"
        secs = sum(d for _, _, d in runs)
        names = ", ".join(name for name, _, _ in runs)
        terminalreporter.write_line(f"criterion {n:2d}: {status:<7} ({secs:6.1f} s) {names}")
