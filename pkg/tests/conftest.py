import functools
from dataclasses import replace

import pytest

from qlyap.scenario import load_builtin
from qlyap.simulator import run

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def scenario_run(name, horizon=None):
    """Run a shipped scenario once per session (optionally with a longer horizon)."""
    st = load_builtin(name).build()
    cfg = st.sim if horizon is None else replace(st.sim, horizon=horizon)
    return st, run(st.system, st.target, st.P, st.controller, st.rho0, cfg)


@pytest.fixture(scope="session")
def runs():
    return scenario_run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
