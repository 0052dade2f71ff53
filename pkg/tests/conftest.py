import sys

import numpy as np
import pytest

from msflow.epdiff import ChParams, ch_lagrangian_spec
from msflow.grid import GridSpec

TWO_PI = 2 * np.pi


@pytest.fixture
def ch16():
    grid = GridSpec(16, TWO_PI, 0.05)
    params = ChParams(1.0, grid)
    return grid, params, ch_lagrangian_spec(params)


@pytest.fixture
def ch16_density():
    grid = GridSpec(16, TWO_PI, 0.05)
    params = ChParams(0.8, grid)
    return grid, params, ch_lagrangian_spec(params, with_density=True)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
