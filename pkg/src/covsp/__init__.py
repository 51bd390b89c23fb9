"""Cost-optimal V2X service placement on a cloud/edge topology."""

from covsp.exact import Infeasible, Solution, solve_bruteforce, solve_exact
from covsp.heuristic import solve_davsp
from covsp.model import (
    ComputeNode,
    ConstraintReport,
    DelayMatrix,
    NodeClass,
    Placement,
    ProblemInstance,
    ResourceVector,
    ServiceInstance,
    ServiceType,
    aggregate_cost,
    average_delay,
    check_feasibility,
)
from covsp.scenario import ScenarioSpec, default_spec, generate

__all__ = [
    "ComputeNode",
    "ConstraintReport",
    "DelayMatrix",
    "Infeasible",
    "NodeClass",
    "Placement",
    "ProblemInstance",
    "ResourceVector",
    "ScenarioSpec",
    "ServiceInstance",
    "ServiceType",
    "Solution",
    "aggregate_cost",
    "average_delay",
    "check_feasibility",
    "default_spec",
    "generate",
    "solve_bruteforce",
    "solve_davsp",
    "solve_exact",
]
