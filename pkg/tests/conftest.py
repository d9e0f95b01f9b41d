import pytest

# criterion number -> (title, outcome), filled from test_acceptance.py reports
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if report.when == "setup" and report.failed:
        ACCEPTANCE[n] = (title, "FAIL")
    elif report.when == "call":
        ACCEPTANCE[n] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, result = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {result}  {title}")
