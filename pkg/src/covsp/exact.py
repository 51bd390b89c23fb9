"""Exact cost-optimal placement by depth-first branch-and-bound.

The search places instances strictest-threshold first and tries the cheapest
nodes first, so the first dive usually lands on a good incumbent. Because the
vehicle-averaged delay of an (instance, node) pair does not depend on the rest
of the placement, the delay constraint is applied once as a static candidate
filter.

Tie-break: among all optimal placements the one returned is the
lexicographically smallest vector of node indices taken in instance order
(lowest node index for the first instance, then the next, ...). The
optimizing pass finds the optimal cost; a second, tightly bounded pass walks
the tree in lexicographic order and stops at the first placement reaching
that cost. :func:`solve_bruteforce` enumerates in the same order, so both
return identical placements.

Instances of one type with the same delay-feasible node set are
interchangeable; the search only considers them on increasing node indices.
This keeps every lexicographically minimal solution reachable.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Sequence

from covsp.model import (
    CAPACITY_EPS,
    Placement,
    ProblemInstance,
    check_feasibility,
    make_placement,
)

DEFAULT_ENUMERATION_BUDGET = 10**7


class Infeasible(Exception):
    """No placement satisfies every constraint.

    ``constraint`` names the family found to be binding: one of ``delay``,
    ``capacity``, ``uniqueness``, ``cost`` (best effort, for diagnostics).
    """

    def __init__(self, constraint: str, message: str):
        super().__init__(message)
        self.constraint = constraint


class InfeasibleSubtree(Exception):
    """An unplaced instance has no delay-feasible node left."""


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Solution:
    placement: Placement
    objective: int
    optimal: bool
    nodes_explored: int
    solver: str = "exact"
    runtime_s: float = 0.0
    # (instance, node) acceptance tests made by the greedy heuristic
    acceptance_tests: int = 0

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "objective": self.objective,
            "optimal": self.optimal,
            "nodes_explored": self.nodes_explored,
            "acceptance_tests": self.acceptance_tests,
            "placement": self.placement.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Solution":
        return cls(
            placement=Placement.from_dict(d["placement"]),
            objective=int(d["objective"]),
            optimal=bool(d["optimal"]),
            nodes_explored=int(d.get("nodes_explored", 0)),
            solver=d.get("solver", "exact"),
            acceptance_tests=int(d.get("acceptance_tests", 0)),
        )


@dataclass
class SearchState:
    """A partial placement. ``assignment[s]`` is a node index or ``None``."""

    assignment: list
    residual: list  # per node [cpu, memory, storage] still free
    occupied: set  # (type index, node index) pairs in use
    cost: int

    @classmethod
    def empty(cls, problem: ProblemInstance) -> "SearchState":
        return cls(
            assignment=[None] * len(problem.instances),
            residual=[list(n.capacity.as_tuple()) for n in problem.nodes],
            occupied=set(),
            cost=0,
        )


class _Tables:
    """Per-problem arrays shared by the bound and the search."""

    def __init__(self, problem: ProblemInstance):
        type_pos = {t.id: u for u, t in enumerate(problem.service_types)}
        self.n_nodes = len(problem.nodes)
        self.n_inst = len(problem.instances)
        self.cost = [n.hosting_cost for n in problem.nodes]
        self.type_of = [type_pos[s.type_id] for s in problem.instances]
        types = problem.service_types
        self.threshold = [types[u].delay_threshold for u in self.type_of]
        self.demand = [types[u].demand.as_tuple() for u in self.type_of]
        averages = problem.delays.averages()
        self.feasible = [
            [c for c in range(self.n_nodes) if averages[s, c] <= self.threshold[s]]
            for s in range(self.n_inst)
        ]
        self.min_cost = [
            min((self.cost[c] for c in self.feasible[s]), default=None) for s in range(self.n_inst)
        ]

    def group_predecessors(self) -> list:
        """For each instance, the instance before it (in natural order) that is interchangeable with it."""
        last: dict = {}
        pred = [None] * self.n_inst
        for s in range(self.n_inst):
            key = (self.type_of[s], tuple(self.feasible[s]))
            pred[s] = last.get(key)
            last[key] = s
        return pred


def lower_bound(state: SearchState, problem: ProblemInstance) -> int:
    """Accumulated cost plus the cheapest delay-feasible node for every unplaced instance.

    Capacity and the one-instance-per-type-per-node rule are ignored, so this
    never exceeds the cost of a feasible completion.
    """
    tables = _Tables(problem)
    bound = state.cost
    for s, c in enumerate(state.assignment):
        if c is not None:
            continue
        if tables.min_cost[s] is None:
            raise InfeasibleSubtree(f"instance {problem.instances[s].id} has no delay-feasible node")
        bound += tables.min_cost[s]
    return bound


def search_order(problem: ProblemInstance) -> list[int]:
    """Instances strictest delay threshold first; ties by type position, then index."""
    type_pos = {t.id: u for u, t in enumerate(problem.service_types)}
    return sorted(
        range(len(problem.instances)),
        key=lambda s: (problem.type_of(problem.instances[s]).delay_threshold, type_pos[problem.instances[s].type_id], s),
    )


class _DFS:
    def __init__(self, tables: _Tables, order: Sequence[int], by_cost: bool, cap: int | None, prune: bool = True):
        self.t = tables
        self.order = list(order)
        self.cap = cap
        self.prune = prune
        self.pred = tables.group_predecessors()
        if by_cost:
            self.cands = [sorted(f, key=lambda c: (tables.cost[c], c)) for f in tables.feasible]
        else:
            self.cands = [list(f) for f in tables.feasible]
        # rest[k]: cheapest possible cost of instances order[k:]
        self.rest = [0] * (len(order) + 1)
        for k in range(len(order) - 1, -1, -1):
            self.rest[k] = self.rest[k + 1] + tables.min_cost[order[k]]
        self.explored = 0

    def run(self, state: SearchState, accept, prune_at):
        """Walk the tree; ``accept(state)`` returns True to stop, ``prune_at()`` gives the live bound test."""
        self._accept = accept
        self._prune = prune_at
        self._stop = False
        self._go(state, 0)

    def _go(self, st: SearchState, k: int):
        self.explored += 1
        if k == len(self.order):
            if self.cap is None or st.cost <= self.cap:
                self._stop = self._accept(st)
            return
        t = self.t
        s = self.order[k]
        u = t.type_of[s]
        dem = t.demand[s]
        p = self.pred[s]
        floor = st.assignment[p] if p is not None and st.assignment[p] is not None else -1
        for c in self.cands[s]:
            if c <= floor:
                continue
            if (u, c) in st.occupied:
                continue
            res = st.residual[c]
            if res[0] + CAPACITY_EPS < dem[0] or res[1] + CAPACITY_EPS < dem[1] or res[2] + CAPACITY_EPS < dem[2]:
                continue
            bound = st.cost + t.cost[c] + self.rest[k + 1]
            if self.prune and self.cap is not None and bound > self.cap:
                continue
            if self.prune and self._prune(bound):
                continue
            st.assignment[s] = c
            st.occupied.add((u, c))
            res[0] -= dem[0]
            res[1] -= dem[1]
            res[2] -= dem[2]
            st.cost += t.cost[c]
            self._go(st, k + 1)
            st.cost -= t.cost[c]
            res[0] += dem[0]
            res[1] += dem[1]
            res[2] += dem[2]
            st.occupied.discard((u, c))
            st.assignment[s] = None
            if self._stop:
                return


def _to_solution(assignment: Sequence[int], problem: ProblemInstance, **kw) -> Solution:
    mapping = {problem.instances[s].id: problem.nodes[c].id for s, c in enumerate(assignment)}
    placement = make_placement(mapping, problem)
    return Solution(placement=placement, objective=placement.total_cost, **kw)


def _optimal_cost(tables: _Tables, problem: ProblemInstance, prune: bool, cap: int | None):
    """Minimum cost under ``cap`` (None for uncapped), plus explored node count."""
    dfs = _DFS(tables, search_order(problem), by_cost=True, cap=cap, prune=prune)
    best = [None]

    def accept(st):
        if best[0] is None or st.cost < best[0]:
            best[0] = st.cost
        return False

    def prune_at(bound):
        return best[0] is not None and bound >= best[0]

    dfs.run(SearchState.empty(problem), accept, prune_at)
    return best[0], dfs.explored


def diagnose(problem: ProblemInstance, tables: _Tables | None = None) -> Infeasible:
    """Name the constraint family that makes ``problem`` infeasible."""
    t = tables or _Tables(problem)
    for s, f in enumerate(t.feasible):
        if not f:
            inst = problem.instances[s]
            return Infeasible("delay", f"instance {inst.id}: no node meets the {t.threshold[s]} ms delay threshold")
    for u, typ in enumerate(problem.service_types):
        union = set()
        for s in range(t.n_inst):
            if t.type_of[s] == u:
                union.update(t.feasible[s])
        if len(union) < typ.instance_count:
            return Infeasible(
                "uniqueness",
                f"type {typ.id}: {typ.instance_count} instances but only {len(union)} delay-feasible nodes",
            )
    cheapest = sum(t.min_cost)
    if cheapest > problem.cost_cap:
        return Infeasible("cost", f"cheapest conceivable cost {cheapest} exceeds cap {problem.cost_cap}")
    uncapped, _ = _optimal_cost(t, problem, prune=True, cap=None)
    if uncapped is not None:
        return Infeasible("cost", f"optimal cost {uncapped} exceeds cap {problem.cost_cap}")
    return Infeasible("capacity", "no placement fits node capacities under the one-instance-per-type-per-node rule")


def solve_exact(problem: ProblemInstance, prune: bool = True) -> Solution:
    """Minimum-cost placement; raises :class:`Infeasible` when there is none.

    ``prune=False`` disables bound pruning (for testing the bound).
    """
    start = time.perf_counter()
    tables = _Tables(problem)
    if any(m is None for m in tables.min_cost):
        raise diagnose(problem, tables)
    best, explored = _optimal_cost(tables, problem, prune, problem.cost_cap)
    if best is None:
        raise diagnose(problem, tables)

    # lexicographically smallest placement at the optimal cost
    dfs = _DFS(tables, range(tables.n_inst), by_cost=False, cap=best)
    found = []

    def accept(st):
        found.append(list(st.assignment))
        return True

    dfs.run(SearchState.empty(problem), accept, lambda bound: False)
    assert found, "optimal cost found but not reachable in the canonical pass"
    return _to_solution(
        found[0],
        problem,
        optimal=True,
        nodes_explored=explored + dfs.explored,
        solver="exact",
        runtime_s=time.perf_counter() - start,
    )


def solve_bruteforce(problem: ProblemInstance, budget: int = DEFAULT_ENUMERATION_BUDGET) -> Solution:
    """Enumerate all |C|^|S| assignments, audit each one, keep the cheapest.

    Iterates in lexicographic order and keeps the first minimum, matching the
    tie-break of :func:`solve_exact`. Refuses to run past ``budget``.
    """
    n_c, n_s = len(problem.nodes), len(problem.instances)
    size = n_c**n_s
    if size > budget:
        raise BudgetExceeded(f"{n_c}^{n_s} = {size} assignments exceeds the budget of {budget}")
    start = time.perf_counter()
    ids = [s.id for s in problem.instances]
    node_ids = [n.id for n in problem.nodes]
    costs = [n.hosting_cost for n in problem.nodes]
    best = None
    best_cost = None
    for combo in itertools.product(range(n_c), repeat=n_s):
        cost = sum(costs[c] for c in combo)
        if best_cost is not None and cost >= best_cost:
            continue
        placement = Placement(
            assignment={ids[s]: node_ids[c] for s, c in enumerate(combo)},
            total_cost=cost,
            per_instance_delay={},
        )
        if check_feasibility(placement, problem).is_empty:
            best, best_cost = combo, cost
    if best is None:
        raise diagnose(problem)
    return _to_solution(
        best,
        problem,
        optimal=True,
        nodes_explored=size,
        solver="bruteforce",
        runtime_s=time.perf_counter() - start,
    )
