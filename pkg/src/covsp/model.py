"""Domain types for cost-optimal V2X service placement.

A problem places every service instance on exactly one compute node so that
the vehicle-averaged delay stays under the service's threshold, node
capacities hold, no node hosts two instances of the same service type and
the total monthly hosting cost stays under the provider's cap.

Money is whole dollars per month (``int``); delays are milliseconds
(``float``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np

RESOURCES = ("cpu", "memory", "storage")

# Slack for float capacity sums; defaults are integral so this never bites.
CAPACITY_EPS = 1e-9


class StructuralError(ValueError):
    """Inputs that do not fit together (bad ids, wrong matrix shape...)."""


class NodeClass(str, enum.Enum):
    CORE = "core"
    ENB = "enb"
    RSU = "rsu"

    @property
    def is_edge(self) -> bool:
        return self is not NodeClass.CORE


@dataclass(frozen=True)
class ResourceVector:
    cpu: float
    memory: float
    storage: float

    def __post_init__(self):
        for name in RESOURCES:
            if getattr(self, name) < 0:
                raise ValueError(f"resource {name} must be >= 0, got {getattr(self, name)}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.cpu, self.memory, self.storage)

    def to_dict(self) -> dict[str, float]:
        return {"cpu": self.cpu, "memory": self.memory, "storage": self.storage}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ResourceVector":
        return cls(cpu=d["cpu"], memory=d["memory"], storage=d["storage"])


@dataclass(frozen=True)
class ComputeNode:
    id: str
    node_class: NodeClass
    capacity: ResourceVector
    hosting_cost: int

    def __post_init__(self):
        if min(self.capacity.as_tuple()) <= 0:
            raise ValueError(f"node {self.id}: capacity components must be > 0")
        if self.hosting_cost <= 0:
            raise ValueError(f"node {self.id}: hosting_cost must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "class": self.node_class.value,
            "capacity": self.capacity.to_dict(),
            "hosting_cost": self.hosting_cost,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ComputeNode":
        return cls(
            id=d["id"],
            node_class=NodeClass(d["class"]),
            capacity=ResourceVector.from_dict(d["capacity"]),
            hosting_cost=int(d["hosting_cost"]),
        )


@dataclass(frozen=True)
class ServiceType:
    id: str
    delay_threshold: float
    demand: ResourceVector
    instance_count: int

    def __post_init__(self):
        if self.delay_threshold <= 0:
            raise ValueError(f"service {self.id}: delay_threshold must be > 0")
        if min(self.demand.as_tuple()) <= 0:
            raise ValueError(f"service {self.id}: demand components must be > 0")
        if self.instance_count < 1:
            raise ValueError(f"service {self.id}: instance_count must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "delay_threshold": self.delay_threshold,
            "demand": self.demand.to_dict(),
            "instance_count": self.instance_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ServiceType":
        return cls(
            id=d["id"],
            delay_threshold=d["delay_threshold"],
            demand=ResourceVector.from_dict(d["demand"]),
            instance_count=int(d["instance_count"]),
        )


@dataclass(frozen=True)
class ServiceInstance:
    id: str
    type_id: str


class DelayMatrix:
    """Sampled delays ``d[s, v, c]`` in ms, shape ``(|S|, |V|, |C|)``.

    The backing array is read-only once wrapped.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        arr = np.array(entries, dtype=np.float64)
        if arr.ndim != 3:
            raise StructuralError(f"delay matrix must be 3-D (S, V, C), got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise StructuralError("delay matrix needs at least one vehicle")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("delays must be finite and non-negative")
        arr.setflags(write=False)
        self._entries = arr

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def vehicle_count(self) -> int:
        return self._entries.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._entries.shape

    def averages(self) -> np.ndarray:
        """Vehicle-averaged delay for every (instance, node) pair, shape (S, C)."""
        return self._entries.mean(axis=1)

    def __eq__(self, other):
        if not isinstance(other, DelayMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._entries, other._entries))

    def __repr__(self):
        return f"DelayMatrix(shape={self.shape})"


@dataclass(frozen=True)
class ProblemInstance:
    nodes: tuple[ComputeNode, ...]
    service_types: tuple[ServiceType, ...]
    instances: tuple[ServiceInstance, ...]
    delays: DelayMatrix
    cost_cap: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "service_types", tuple(self.service_types))
        object.__setattr__(self, "instances", tuple(self.instances))
        if not self.nodes:
            raise StructuralError("problem needs at least one node")
        if self.cost_cap <= 0:
            raise ValueError("cost_cap must be > 0")
        _unique_ids("node", (n.id for n in self.nodes))
        _unique_ids("service type", (t.id for t in self.service_types))
        _unique_ids("instance", (s.id for s in self.instances))

        types = {t.id: t for t in self.service_types}
        per_type = {t.id: 0 for t in self.service_types}
        for inst in self.instances:
            if inst.type_id not in types:
                raise StructuralError(f"instance {inst.id} references unknown type {inst.type_id}")
            per_type[inst.type_id] += 1
        for t in self.service_types:
            if per_type[t.id] != t.instance_count:
                raise StructuralError(
                    f"type {t.id}: {per_type[t.id]} instances listed, instance_count={t.instance_count}"
                )
            if t.instance_count > len(self.nodes):
                raise StructuralError(
                    f"type {t.id}: {t.instance_count} instances cannot spread over {len(self.nodes)} nodes"
                )
        expected = (len(self.instances), self.delays.vehicle_count, len(self.nodes))
        if self.delays.shape != expected:
            raise StructuralError(f"delay matrix shape {self.delays.shape}, expected {expected}")

    # Lookups are rebuilt on demand; problems are small and immutable.
    def node_index(self, node_id: str) -> int:
        for i, n in enumerate(self.nodes):
            if n.id == node_id:
                return i
        raise StructuralError(f"unknown node id {node_id!r}")

    def instance_index(self, instance_id: str) -> int:
        for i, s in enumerate(self.instances):
            if s.id == instance_id:
                return i
        raise StructuralError(f"unknown instance id {instance_id!r}")

    def service_type(self, type_id: str) -> ServiceType:
        for t in self.service_types:
            if t.id == type_id:
                return t
        raise StructuralError(f"unknown service type {type_id!r}")

    def type_of(self, instance: ServiceInstance) -> ServiceType:
        return self.service_type(instance.type_id)


def _unique_ids(kind: str, ids: Iterable[str]) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise StructuralError(f"duplicate {kind} id {i!r}")
        seen.add(i)


def expand_instances(service_types: Iterable[ServiceType]) -> tuple[ServiceInstance, ...]:
    """One ServiceInstance per unit of each type's instance_count, ids ``<type>-<k>``."""
    return tuple(
        ServiceInstance(id=f"{t.id}-{k}", type_id=t.id)
        for t in service_types
        for k in range(t.instance_count)
    )


@dataclass(frozen=True)
class Placement:
    """Instance-id -> node-id map with its audited cost and delays."""

    assignment: Mapping[str, str]
    total_cost: int
    per_instance_delay: Mapping[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "assignment": dict(self.assignment),
            "total_cost": self.total_cost,
            "per_instance_delay": dict(self.per_instance_delay),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Placement":
        return cls(
            assignment=dict(d["assignment"]),
            total_cost=int(d.get("total_cost", 0)),
            per_instance_delay={k: float(v) for k, v in d.get("per_instance_delay", {}).items()},
        )


def make_placement(assignment: Mapping[str, str], problem: ProblemInstance) -> Placement:
    """Build a Placement whose cost and delays are recomputed from ``problem``."""
    assignment = dict(assignment)
    delays = {}
    for inst_id, node_id in assignment.items():
        delays[inst_id] = average_delay(
            problem.delays, problem.instance_index(inst_id), problem.node_index(node_id)
        )
    cost = sum(problem.nodes[problem.node_index(n)].hosting_cost for n in assignment.values())
    return Placement(assignment=assignment, total_cost=cost, per_instance_delay=delays)


def average_delay(delays: DelayMatrix, s: int, c: int) -> float:
    """Mean of ``d[s, v, c]`` over all vehicles, served or not."""
    n_s, _, n_c = delays.shape
    if not (0 <= s < n_s and 0 <= c < n_c):
        raise StructuralError(f"(instance {s}, node {c}) outside delay matrix of shape {delays.shape}")
    return float(delays.entries[s, :, c].mean())


def aggregate_cost(placement: Placement, problem: ProblemInstance) -> int:
    costs = {n.id: n.hosting_cost for n in problem.nodes}
    total = 0
    for node_id in placement.assignment.values():
        if node_id not in costs:
            raise StructuralError(f"unknown node id {node_id!r}")
        total += costs[node_id]
    return total


@dataclass(frozen=True)
class Violation:
    entity: str
    measured: float
    bound: float

    def to_dict(self) -> dict[str, Any]:
        return {"entity": self.entity, "measured": self.measured, "bound": self.bound}


CONSTRAINT_FAMILIES = ("delay", "capacity", "placement", "uniqueness", "cost")


@dataclass(frozen=True)
class ConstraintReport:
    delay_violations: tuple[Violation, ...] = ()
    capacity_violations: tuple[Violation, ...] = ()
    placement_violations: tuple[Violation, ...] = ()
    uniqueness_violations: tuple[Violation, ...] = ()
    cost_violation: tuple[Violation, ...] = ()

    def family(self, name: str) -> tuple[Violation, ...]:
        if name == "cost":
            return self.cost_violation
        return getattr(self, f"{name}_violations")

    @property
    def is_empty(self) -> bool:
        return not any(self.family(f) for f in CONSTRAINT_FAMILIES)

    def __bool__(self):
        # truthy when something is violated
        return not self.is_empty

    def to_dict(self) -> dict[str, list[dict[str, Any]]]:
        return {f: [v.to_dict() for v in self.family(f)] for f in CONSTRAINT_FAMILIES}


def check_feasibility(placement: Placement, problem: ProblemInstance) -> ConstraintReport:
    """Audit every constraint family independently; violations are data.

    Unknown instance or node ids in the assignment are reported as placement
    violations and otherwise ignored.
    """
    node_pos = {n.id: i for i, n in enumerate(problem.nodes)}
    inst_pos = {s.id: i for i, s in enumerate(problem.instances)}
    types = {t.id: t for t in problem.service_types}
    averages = problem.delays.averages()

    delay, capacity, placement_v, unique, cost = [], [], [], [], []
    valid: list[tuple[int, int]] = []
    for inst_id, node_id in placement.assignment.items():
        if inst_id not in inst_pos:
            placement_v.append(Violation(f"unknown instance {inst_id}", 1, 0))
        elif node_id not in node_pos:
            placement_v.append(Violation(f"{inst_id} on unknown node {node_id}", 0, 1))
        else:
            valid.append((inst_pos[inst_id], node_pos[node_id]))
    placed = {s for s, _ in valid}

    for s, inst in enumerate(problem.instances):
        if s not in placed:
            placement_v.append(Violation(inst.id, 0, 1))

    for s, c in valid:
        threshold = types[problem.instances[s].type_id].delay_threshold
        if averages[s, c] > threshold:
            delay.append(Violation(problem.instances[s].id, float(averages[s, c]), threshold))

    used = np.zeros((len(problem.nodes), len(RESOURCES)))
    occupancy: dict[tuple[str, int], int] = {}
    for s, c in valid:
        t = types[problem.instances[s].type_id]
        used[c] += t.demand.as_tuple()
        occupancy[(t.id, c)] = occupancy.get((t.id, c), 0) + 1
    for c, node in enumerate(problem.nodes):
        for r, name in enumerate(RESOURCES):
            cap = getattr(node.capacity, name)
            if used[c, r] > cap + CAPACITY_EPS:
                capacity.append(Violation(f"{node.id}.{name}", float(used[c, r]), cap))
    for (type_id, c), k in occupancy.items():
        if k > 1:
            unique.append(Violation(f"{type_id}@{problem.nodes[c].id}", k, 1))

    total = sum(problem.nodes[c].hosting_cost for _, c in valid)
    if total > problem.cost_cap:
        cost.append(Violation("total", total, problem.cost_cap))

    return ConstraintReport(
        delay_violations=tuple(delay),
        capacity_violations=tuple(capacity),
        placement_violations=tuple(placement_v),
        uniqueness_violations=tuple(unique),
        cost_violation=tuple(cost),
    )


# JSON ----------------------------------------------------------------------


def problem_to_dict(problem: ProblemInstance) -> dict[str, Any]:
    return {
        "nodes": [n.to_dict() for n in problem.nodes],
        "service_types": [t.to_dict() for t in problem.service_types],
        "instances": [{"id": s.id, "type_id": s.type_id} for s in problem.instances],
        "cost_cap": problem.cost_cap,
        "delays": {
            "vehicle_count": problem.delays.vehicle_count,
            "entries": problem.delays.entries.tolist(),
        },
    }


def problem_from_dict(d: Mapping[str, Any]) -> ProblemInstance:
    """Parse a problem document.

    The delay matrix is either inline (``delays``) or regenerated from a
    scenario spec (``scenario``), in which case the spec alone defines the
    problem.
    """
    if "scenario" in d and "delays" not in d:
        from covsp.scenario import ScenarioSpec, generate

        return generate(ScenarioSpec.from_dict(d["scenario"]))
    try:
        service_types = [ServiceType.from_dict(t) for t in d["service_types"]]
        if "instances" in d:
            instances = [ServiceInstance(id=s["id"], type_id=s["type_id"]) for s in d["instances"]]
        else:
            instances = expand_instances(service_types)
        delays = d["delays"]
        matrix = DelayMatrix(delays["entries"])
        if "vehicle_count" in delays and delays["vehicle_count"] != matrix.vehicle_count:
            raise StructuralError("delays.vehicle_count disagrees with the entries")
        return ProblemInstance(
            nodes=[ComputeNode.from_dict(n) for n in d["nodes"]],
            service_types=service_types,
            instances=instances,
            delays=matrix,
            cost_cap=int(d["cost_cap"]),
        )
    except KeyError as exc:
        raise StructuralError(f"missing field {exc}") from None

