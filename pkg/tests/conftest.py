import pytest

_acceptance: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(code, title): exit criterion of the build")
    config.addinivalue_line("markers", "slow: runs full-budget optimizations")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _markers.get(report.nodeid)
    if marker is None:
        return
    code, title = marker
    _acceptance[code] = (title, "PASS" if report.passed else "FAIL")


_markers: dict[str, tuple[str, str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            _markers[item.nodeid] = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_acceptance, key=lambda c: int(c.split("-")[1])):
        title, verdict = _acceptance[code]
        terminalreporter.write_line(f"{code:<6} {verdict}  {title}")


@pytest.fixture
def tric3():
    from cmoforge.problems import make_problem

    return make_problem("TRIC3")
