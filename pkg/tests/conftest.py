import time

import numpy as np
import pytest

import acceptance_log
from blowuplab.core import InitialData, ProblemSpec
from blowuplab.physical_solver import StepControl, solve_until_blowup

SUITE_LIMIT = 600.0


def gaussian_spec():
    return ProblemSpec(
        N=1, p=3.0, geometry="interval", R=4.0, boundary="dirichlet",
        initial=InitialData("gaussian", {"amplitude": 5.0, "width": 1.0}),
    )


@pytest.fixture(scope="session")
def blowup_run():
    """N = 1, p = 3 Gaussian blow-up resolved to ||u|| = 100 (h = 0.002)."""
    start = time.perf_counter()
    run = solve_until_blowup(gaussian_spec(), StepControl(u_max=100.0), node_count=4001)
    run.meta["wall_time"] = time.perf_counter() - start
    return run


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_log.LINES
    if not lines:
        return
    elapsed = time.perf_counter() - acceptance_log.SESSION_START
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, ok, detail in sorted(lines, key=lambda x: int(x[0].split()[0][2:])):
        tr.write_line(f"{crit}: {'PASS' if ok else 'FAIL'}  {detail}")
    ok = elapsed < SUITE_LIMIT
    tr.write_line(
        f"AC10 suite runtime: {'PASS' if ok else 'FAIL'}  {elapsed:.1f} s (limit {SUITE_LIMIT:.0f} s)"
    )
