import numpy as np
import pytest

from covsp.model import (
    ComputeNode,
    DelayMatrix,
    NodeClass,
    ProblemInstance,
    ResourceVector,
    ServiceType,
    expand_instances,
)
from covsp.scenario import load_paper_setup

BIG = ResourceVector(32, 64, 240)
SMALL = ResourceVector(8, 16, 240)


def node(id, cost, cls=NodeClass.RSU, cap=SMALL):
    return ComputeNode(id=id, node_class=cls, capacity=cap, hosting_cost=cost)


def stype(id, threshold, count=1, demand=ResourceVector(2, 4, 40)):
    return ServiceType(id=id, delay_threshold=threshold, demand=demand, instance_count=count)


def make_problem(nodes, types, node_delays, cost_cap=500_000, vehicles=1):
    """Problem whose delay to node c is ``node_delays[c]`` for every instance and vehicle.

    ``node_delays`` may also be a full (S, V, C) array.
    """
    instances = expand_instances(types)
    arr = np.asarray(node_delays, dtype=float)
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (len(instances), vehicles, len(nodes)))
    return ProblemInstance(
        nodes=nodes,
        service_types=types,
        instances=instances,
        delays=DelayMatrix(arr),
        cost_cap=cost_cap,
    )


@pytest.fixture(scope="session")
def default_scenario():
    return load_paper_setup()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
