"""Seeded generation of placement problems for the highway cloud/edge setup.

Default topology: 2 core cloud nodes, 3 eNodeBs and 5 road side units,
three V2X services (CAM, DENM, media) whose instance counts grow with the
number of vehicles. Vehicle-to-node delays are drawn uniformly per node
class.

RNG: ``numpy.random.default_rng(seed)`` (PCG64). Delays are drawn as one
``(S, V, C)`` block of ``rng.random()`` and scaled per node class, so a
given (spec, seed) always yields the same matrix bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from covsp.model import (
    ComputeNode,
    DelayMatrix,
    NodeClass,
    ProblemInstance,
    ResourceVector,
    ServiceInstance,
    ServiceType,
    StructuralError,
    expand_instances,
)

# Order in which generated nodes are laid out; see node tie-breaking in the solvers.
NODE_LAYOUT = (NodeClass.CORE, NodeClass.RSU, NodeClass.ENB)


@dataclass(frozen=True)
class ServiceSpec:
    id: str
    delay_threshold: float
    demand: ResourceVector

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "delay_threshold": self.delay_threshold, "demand": self.demand.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ServiceSpec":
        return cls(d["id"], d["delay_threshold"], ResourceVector.from_dict(d["demand"]))


@dataclass(frozen=True)
class ScenarioSpec:
    core_count: int
    enb_count: int
    rsu_count: int
    core_capacity: ResourceVector
    edge_capacity: ResourceVector
    core_cost: int
    edge_cost: int
    delay_ranges: Mapping[NodeClass, tuple[float, float]]
    vehicle_count: int
    vehicles_per_instance: int
    service_catalog: tuple[ServiceSpec, ...]
    cost_cap: int
    seed: int = 0
    # When False, a per-type count above the node count is an error instead of being clamped.
    clamp_instances: bool = True

    def __post_init__(self):
        object.__setattr__(self, "service_catalog", tuple(self.service_catalog))
        object.__setattr__(
            self,
            "delay_ranges",
            {NodeClass(k): (float(v[0]), float(v[1])) for k, v in dict(self.delay_ranges).items()},
        )
        if min(self.core_count, self.enb_count, self.rsu_count) < 0:
            raise ValueError("node counts must be >= 0")
        if self.node_count < 1:
            raise ValueError("scenario needs at least one node")
        for cls in NodeClass:
            if self._count(cls) == 0:
                continue
            if cls not in self.delay_ranges:
                raise ValueError(f"no delay range for node class {cls.value}")
            lo, hi = self.delay_ranges[cls]
            # lo == hi is allowed: a collapsed range gives constant delays
            if not 0 <= lo <= hi:
                raise ValueError(f"bad delay range for {cls.value}: ({lo}, {hi})")
        if self.vehicle_count < 1:
            raise ValueError("vehicle_count must be >= 1")
        if self.vehicles_per_instance < 1:
            raise ValueError("vehicles_per_instance must be >= 1")
        if not self.service_catalog:
            raise ValueError("service catalog is empty")
        if self.cost_cap <= 0:
            raise ValueError("cost_cap must be > 0")

    def _count(self, cls: NodeClass) -> int:
        return {NodeClass.CORE: self.core_count, NodeClass.ENB: self.enb_count, NodeClass.RSU: self.rsu_count}[cls]

    @property
    def node_count(self) -> int:
        return self.core_count + self.enb_count + self.rsu_count

    def with_overrides(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "core_count": self.core_count,
            "enb_count": self.enb_count,
            "rsu_count": self.rsu_count,
            "core_capacity": self.core_capacity.to_dict(),
            "edge_capacity": self.edge_capacity.to_dict(),
            "core_cost": self.core_cost,
            "edge_cost": self.edge_cost,
            "delay_ranges": {cls.value: list(self.delay_ranges[cls]) for cls in NodeClass if cls in self.delay_ranges},
            "vehicle_count": self.vehicle_count,
            "vehicles_per_instance": self.vehicles_per_instance,
            "service_catalog": [s.to_dict() for s in self.service_catalog],
            "cost_cap": self.cost_cap,
            "seed": self.seed,
            "clamp_instances": self.clamp_instances,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioSpec":
        try:
            return cls(
                core_count=int(d["core_count"]),
                enb_count=int(d["enb_count"]),
                rsu_count=int(d["rsu_count"]),
                core_capacity=ResourceVector.from_dict(d["core_capacity"]),
                edge_capacity=ResourceVector.from_dict(d["edge_capacity"]),
                core_cost=int(d["core_cost"]),
                edge_cost=int(d["edge_cost"]),
                delay_ranges={NodeClass(k): tuple(v) for k, v in d["delay_ranges"].items()},
                vehicle_count=int(d["vehicle_count"]),
                vehicles_per_instance=int(d["vehicles_per_instance"]),
                service_catalog=[ServiceSpec.from_dict(s) for s in d["service_catalog"]],
                cost_cap=int(d["cost_cap"]),
                seed=int(d.get("seed", 0)),
                clamp_instances=bool(d.get("clamp_instances", True)),
            )
        except KeyError as exc:
            raise StructuralError(f"scenario spec missing field {exc}") from None


# VM sizes: medium / large / extra-large on a 1 core : 2 GB ladder.
MEDIUM_VM = ResourceVector(cpu=2, memory=4, storage=40)
LARGE_VM = ResourceVector(cpu=4, memory=8, storage=80)
XLARGE_VM = ResourceVector(cpu=8, memory=16, storage=160)


def default_spec() -> ScenarioSpec:
    """The highway simulation setup with 10 vehicles and seed 0."""
    return ScenarioSpec(
        core_count=2,
        enb_count=3,
        rsu_count=5,
        core_capacity=ResourceVector(cpu=32, memory=64, storage=240),
        edge_capacity=ResourceVector(cpu=8, memory=16, storage=240),
        core_cost=7_500,
        edge_cost=15_000,
        delay_ranges={
            NodeClass.RSU: (1.0, 10.0),
            NodeClass.ENB: (20.0, 40.0),
            NodeClass.CORE: (60.0, 130.0),
        },
        vehicle_count=10,
        vehicles_per_instance=10,
        service_catalog=(
            ServiceSpec("CAM", 20.0, MEDIUM_VM),
            ServiceSpec("DENM", 50.0, LARGE_VM),
            ServiceSpec("MEDIA", 150.0, XLARGE_VM),
        ),
        cost_cap=500_000,
        seed=0,
    )


def load_paper_setup() -> ScenarioSpec:
    """The checked-in ``paper-setup.json`` shipped with the package."""
    text = resources.files("covsp").joinpath("data/paper-setup.json").read_text()
    return ScenarioSpec.from_dict(json.loads(text))


def instance_counts(vehicle_count: int, spec: ScenarioSpec) -> dict[str, int]:
    if vehicle_count < 1:
        raise ValueError(f"vehicle_count must be >= 1, got {vehicle_count}")
    n = max(1, math.ceil(vehicle_count / spec.vehicles_per_instance))
    if spec.clamp_instances:
        n = min(n, spec.node_count)
    elif n > spec.node_count:
        raise StructuralError(
            f"{n} instances per service type cannot be spread over {spec.node_count} nodes"
        )
    return {s.id: n for s in spec.service_catalog}


def build_nodes(spec: ScenarioSpec) -> tuple[ComputeNode, ...]:
    nodes = []
    for cls in NODE_LAYOUT:
        core = cls is NodeClass.CORE
        for k in range(spec._count(cls)):
            nodes.append(
                ComputeNode(
                    id=f"{cls.value}-{k}",
                    node_class=cls,
                    capacity=spec.core_capacity if core else spec.edge_capacity,
                    hosting_cost=spec.core_cost if core else spec.edge_cost,
                )
            )
    return tuple(nodes)


def sample_delays(
    spec: ScenarioSpec,
    instances: Sequence[ServiceInstance],
    nodes: Sequence[ComputeNode],
    rng: np.random.Generator,
) -> DelayMatrix:
    u = rng.random((len(instances), spec.vehicle_count, len(nodes)))
    lo = np.array([spec.delay_ranges[n.node_class][0] for n in nodes])
    hi = np.array([spec.delay_ranges[n.node_class][1] for n in nodes])
    return DelayMatrix(lo + (hi - lo) * u)


def generate(spec: ScenarioSpec) -> ProblemInstance:
    counts = instance_counts(spec.vehicle_count, spec)
    service_types = tuple(
        ServiceType(id=s.id, delay_threshold=s.delay_threshold, demand=s.demand, instance_count=counts[s.id])
        for s in spec.service_catalog
    )
    nodes = build_nodes(spec)
    instances = expand_instances(service_types)
    rng = np.random.default_rng(spec.seed)
    return ProblemInstance(
        nodes=nodes,
        service_types=service_types,
        instances=instances,
        delays=sample_delays(spec, instances, nodes, rng),
        cost_cap=spec.cost_cap,
    )


def child_seed(base_seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed for one cell of a sweep."""
    ss = np.random.SeedSequence([base_seed, *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class RandomProblemConfig:
    """Bounds for small random problems (oracle-sized test fodder)."""

    max_nodes: int = 4
    max_instances: int = 4
    vehicles: tuple[int, int] = (1, 5)
    costs: tuple[int, ...] = (1_000, 2_000, 3_000, 5_000)
    delay_range: tuple[float, float] = (1.0, 60.0)
    capacity_range: tuple[int, int] = (4, 12)
    demand_range: tuple[int, int] = (1, 5)
    threshold_range: tuple[float, float] = (20.0, 80.0)
    cap_choices: tuple[int, ...] = field(default=(6_000, 10_000, 15_000, 1_000_000))


def random_problem(rng: np.random.Generator, cfg: RandomProblemConfig | None = None) -> ProblemInstance:
    """A small random problem; roughly a third come out infeasible."""
    cfg = cfg or RandomProblemConfig()
    n_nodes = int(rng.integers(1, cfg.max_nodes + 1))
    n_inst = int(rng.integers(1, cfg.max_instances + 1))
    n_veh = int(rng.integers(cfg.vehicles[0], cfg.vehicles[1] + 1))
    classes = list(NodeClass)

    def vec(lo, hi):
        return ResourceVector(*(int(x) for x in rng.integers(lo, hi + 1, size=3)))

    nodes = tuple(
        ComputeNode(
            id=f"n{c}",
            node_class=classes[int(rng.integers(len(classes)))],
            capacity=vec(*cfg.capacity_range),
            hosting_cost=int(rng.choice(cfg.costs)),
        )
        for c in range(n_nodes)
    )
    # split instances over up to three types, each type at most n_nodes instances
    counts: list[int] = []
    left = n_inst
    while left > 0:
        k = int(rng.integers(1, min(left, n_nodes) + 1))
        counts.append(k)
        left -= k
    service_types = tuple(
        ServiceType(
            id=f"t{u}",
            delay_threshold=float(rng.uniform(*cfg.threshold_range)),
            demand=vec(*cfg.demand_range),
            instance_count=k,
        )
        for u, k in enumerate(counts)
    )
    instances = expand_instances(service_types)
    entries = rng.uniform(*cfg.delay_range, size=(len(instances), n_veh, n_nodes))
    return ProblemInstance(
        nodes=nodes,
        service_types=service_types,
        instances=instances,
        delays=DelayMatrix(entries),
        cost_cap=int(rng.choice(cfg.cap_choices)),
    )
