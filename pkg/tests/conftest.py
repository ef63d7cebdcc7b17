import functools
import json
import pathlib

import pytest

from habitgrowth import GridSpec, ModelParams, solve_hjb

import _report

BASELINE = dict(B=0.02, rho=0.3, beta1=0.1, beta2=0.1, theta=0.05, sigma=2.0, gamma=0.5, R=1.0)
FROZEN = json.loads((pathlib.Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def params():
    return ModelParams(**BASELINE)


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


@functools.lru_cache(maxsize=None)
def solved(n: int, R: float = 1.0):
    return solve_hjb(GridSpec.square(n), ModelParams(**{**BASELINE, "R": R}))


def pytest_terminal_summary(terminalreporter):
    if _report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in _report.LINES:
            terminalreporter.write_line(line)
