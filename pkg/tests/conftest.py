import sys

import numpy as np
import pytest

from helpers import complete_topology
from resilient_gne.game import commodity_market
from resilient_gne.topology import AgentId


@pytest.fixture
def small_topo():
    return complete_topology((5, 5, 5), byzantine=[AgentId(1, 5)], b_cluster=(1, 1, 1))


@pytest.fixture
def small_game():
    return commodity_market((5, 5, 5), 4, 4, p_bar=[2, 3, 4, 5], capacity=1.0, upper=20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
