import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown":
        return
    n, title = mark.args
    if rep.when == "setup" and rep.passed:
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _results[n] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        title, status, detail = _results[n]
        line = f"criterion {n:>2} {status}: {title}"
        terminalreporter.write_line(line + (f" | {detail}" if detail else ""))
