import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

@pytest.fixture(scope="session")
def runs():
    """Every shipped scenario, run once with its own seed."""
    from coupledwgf.scenarios import load_config, run_scenario, shipped_configs

    return {p.stem: run_scenario(load_config(p)) for p in shipped_configs()}


# acceptance criteria: one pass/fail line each in the terminal summary
_AC = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    mk = item.get_closest_marker("acceptance")
    if mk is None:
        return
    n, title = mk.args
    ok = _AC.get(n, (True, title))[0]
    if rep.failed or rep.skipped:
        ok = False
    _AC[n] = (ok, title)


def pytest_terminal_summary(terminalreporter):
    if not _AC:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_AC):
        ok, title = _AC[n]
        terminalreporter.write_line(f"AC{n:<3} {'PASS' if ok else 'FAIL'}  {title}")
