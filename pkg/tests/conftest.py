import pytest

from helpers import load_spec


@pytest.fixture(scope="session")
def z2():
    return load_spec("z2.json")


@pytest.fixture(scope="session")
def cheb():
    return load_spec("chebyshev.json")


@pytest.fixture(scope="session")
def pm2():
    return load_spec("z2pm2.json")


@pytest.fixture(scope="session")
def family():
    return load_spec("family.json")


@pytest.fixture(scope="session")
def corpus(z2, cheb, pm2):
    return {"z2": z2, "chebyshev": cheb, "z2pm2": pm2}


# ---------------------------------------------------------------------------
# One summary line per acceptance criterion

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        key = tuple(mark.args)
        _CRITERIA[key] = _CRITERIA.get(key, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), ok in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")
