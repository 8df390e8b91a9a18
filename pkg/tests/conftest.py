import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.outcome != "passed":
        detail = dict(report.user_properties).get("measured", "")
        _CRITERIA[key] = ("PASS" if report.outcome == "passed" else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), (status, detail) in sorted(_CRITERIA.items()):
        line = f"criterion {num:2d} {name.replace('_', ' ')}: {status}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
