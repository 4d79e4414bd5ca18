"""Prints one line per acceptance criterion at the end of the run."""

_RESULTS = []


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = detail or report.longrepr[2]
        _RESULTS.append((report.nodeid.split("::")[-1], outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _RESULTS:
        terminalreporter.write_line(f"{outcome:4}  {name}  {detail}")
