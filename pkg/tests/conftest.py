import warnings

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    crit = marker.args[0]
    ok = rep.passed
    prev = _RESULTS.get(crit)
    _RESULTS[crit] = (ok if prev is None else prev[0] and ok,
                      (prev[1] if prev else []) + [(item.name, ok, rep.duration)])


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_RESULTS, key=lambda c: int(c[2:])):
        ok, parts = _RESULTS[crit]
        total = sum(p[2] for p in parts)
        tr.write_line(f"{crit}: {'PASS' if ok else 'FAIL'}  ({len(parts)} checks, {total:.1f} s)")


@pytest.fixture(autouse=True)
def _quiet_expected_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        yield
