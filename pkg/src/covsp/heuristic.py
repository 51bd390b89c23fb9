"""Delay-aware greedy placement (DA-VSP).

Service types are handled in ascending delay-threshold order. Each instance
walks the nodes from cheapest to dearest (lowest index first among equal
costs) and takes the first one with enough residual capacity and a
vehicle-averaged delay within the threshold. A node taken by an instance is
withheld from the remaining instances of the same type only; the next type
starts again from the full node set. Rejected nodes are marked unusable for
the current instance.

There is no backtracking. An instance that runs out of nodes makes the whole
run infeasible, and so does a finished placement that exceeds the cost cap
(the greedy itself never looks at the cap).
"""

from __future__ import annotations

import time
from typing import Sequence

from covsp.exact import Infeasible, Solution
from covsp.model import CAPACITY_EPS, ProblemInstance, ServiceType, make_placement


def sort_types_by_tolerance(types: Sequence[ServiceType]) -> list[ServiceType]:
    # sorted() is stable, so equal thresholds keep input order
    return sorted(types, key=lambda t: t.delay_threshold)


def solve_davsp(problem: ProblemInstance) -> Solution:
    start = time.perf_counter()
    nodes = problem.nodes
    averages = problem.delays.averages()
    residual = [list(n.capacity.as_tuple()) for n in nodes]
    by_price = sorted(range(len(nodes)), key=lambda c: (nodes[c].hosting_cost, c))

    assignment: dict[str, str] = {}
    tests = 0
    for stype in sort_types_by_tolerance(problem.service_types):
        available = set(range(len(nodes)))
        demand = stype.demand.as_tuple()
        members = [s for s, inst in enumerate(problem.instances) if inst.type_id == stype.id]
        for s in members:
            unusable: set[int] = set()
            delay_rejects = 0
            placed = None
            while placed is None:
                candidates = [c for c in by_price if c in available and c not in unusable]
                if not candidates:
                    inst = problem.instances[s]
                    family = "delay" if delay_rejects == len(available) else "capacity"
                    raise Infeasible(
                        family,
                        f"DA-VSP: no node left for instance {inst.id} "
                        f"({len(available)} candidates, {delay_rejects} rejected on delay)",
                    )
                c = candidates[0]
                tests += 1
                res = residual[c]
                fits = all(res[i] + CAPACITY_EPS >= demand[i] for i in range(3))
                on_time = averages[s, c] <= stype.delay_threshold
                if fits and on_time:
                    placed = c
                    for i in range(3):
                        res[i] -= demand[i]
                    available.discard(c)
                else:
                    delay_rejects += not on_time
                    unusable.add(c)
            assignment[problem.instances[s].id] = nodes[placed].id

    placement = make_placement(assignment, problem)
    if placement.total_cost > problem.cost_cap:
        raise Infeasible(
            "cost", f"DA-VSP placement costs {placement.total_cost}, above the cap of {problem.cost_cap}"
        )
    return Solution(
        placement=placement,
        objective=placement.total_cost,
        optimal=False,
        nodes_explored=tests,
        solver="davsp",
        runtime_s=time.perf_counter() - start,
        acceptance_tests=tests,
    )
