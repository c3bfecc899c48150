import re

_CRITERIA: dict[int, list] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    entry = _CRITERIA.setdefault(int(m.group(1)), [m.group(2), True])
    if report.failed:
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        name, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {name.replace('_', ' '):<34} {'PASS' if ok else 'FAIL'}")
