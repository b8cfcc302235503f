"""Collects acceptance verdicts and prints one line per criterion."""

_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    n = props["criterion"]
    if report.when == "call" or (report.when == "setup" and report.failed):
        verdict = "PASS" if report.passed else "FAIL"
        _results[n] = (verdict, props.get("measured", ""))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        verdict, measured = _results[n]
        tr.write_line(f"criterion {n:2d}: {verdict}  {measured}")
