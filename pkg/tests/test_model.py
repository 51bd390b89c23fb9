import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem, node, stype
from covsp.model import (
    ConstraintReport,
    DelayMatrix,
    NodeClass,
    Placement,
    ResourceVector,
    ServiceInstance,
    StructuralError,
    aggregate_cost,
    average_delay,
    check_feasibility,
    make_placement,
    problem_from_dict,
    problem_to_dict,
)
from covsp.scenario import random_problem


def test_average_delay_zero():
    d = DelayMatrix(np.zeros((1, 4, 2)))
    assert average_delay(d, 0, 1) == 0.0


def test_average_delay_hand_mean():
    d = DelayMatrix(np.array([10.0, 20.0, 30.0]).reshape(1, 3, 1))
    assert average_delay(d, 0, 0) == 20.0


def test_average_delay_single_vehicle():
    d = DelayMatrix([[[7.3]]])
    assert average_delay(d, 0, 0) == 7.3


def test_average_delay_out_of_range():
    d = DelayMatrix(np.ones((2, 3, 4)))
    with pytest.raises(StructuralError):
        average_delay(d, 2, 0)
    with pytest.raises(StructuralError):
        average_delay(d, 0, 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_average_delay_vehicle_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    arr = rng.uniform(0, 100, size=(3, 7, 4))
    perm = rng.permutation(7)
    a, b = DelayMatrix(arr), DelayMatrix(arr[:, perm, :])
    for s in range(3):
        for c in range(4):
            assert average_delay(a, s, c) == pytest.approx(average_delay(b, s, c), rel=1e-12)


def test_delay_matrix_is_read_only():
    d = DelayMatrix(np.ones((1, 1, 1)))
    with pytest.raises(ValueError):
        d.entries[0, 0, 0] = 5.0


def test_delay_matrix_rejects_bad_shape_and_values():
    with pytest.raises(StructuralError):
        DelayMatrix(np.ones((2, 2)))
    with pytest.raises(ValueError):
        DelayMatrix(-np.ones((1, 1, 1)))


def _priced_nodes():
    core = [node(f"core-{i}", 7_500, NodeClass.CORE) for i in range(2)]
    edge = [node(f"rsu-{i}", 15_000) for i in range(3)]
    return core + edge


def test_aggregate_cost_empty():
    p = make_problem(_priced_nodes(), [stype("A", 100)], [1.0] * 5)
    assert aggregate_cost(Placement({}, 0, {}), p) == 0


def test_aggregate_cost_one_core_instance():
    p = make_problem(_priced_nodes(), [stype("A", 100)], [1.0] * 5)
    assert aggregate_cost(Placement({"A-0": "core-0"}, 0, {}), p) == 7_500


def test_aggregate_cost_two_core_three_edge():
    p = make_problem(_priced_nodes(), [stype("A", 100, count=5)], [1.0] * 5)
    assignment = {"A-0": "core-0", "A-1": "core-1", "A-2": "rsu-0", "A-3": "rsu-1", "A-4": "rsu-2"}
    assert aggregate_cost(Placement(assignment, 0, {}), p) == 60_000


def test_aggregate_cost_unknown_node():
    p = make_problem(_priced_nodes(), [stype("A", 100)], [1.0] * 5)
    with pytest.raises(StructuralError):
        aggregate_cost(Placement({"A-0": "nowhere"}, 0, {}), p)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_aggregate_cost_additive(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    ids = [s.id for s in p.instances]
    node_ids = [n.id for n in p.nodes]
    full = {i: node_ids[int(rng.integers(len(node_ids)))] for i in ids}
    cut = int(rng.integers(len(ids) + 1))
    left = {i: full[i] for i in ids[:cut]}
    right = {i: full[i] for i in ids[cut:]}
    total = aggregate_cost(Placement(full, 0, {}), p)
    assert total == aggregate_cost(Placement(left, 0, {}), p) + aggregate_cost(Placement(right, 0, {}), p)


def test_check_empty_assignment_violates_placement():
    p = make_problem(_priced_nodes(), [stype("A", 100, count=2)], [1.0] * 5)
    report = check_feasibility(Placement({}, 0, {}), p)
    assert {v.entity for v in report.placement_violations} == {"A-0", "A-1"}
    assert not report.is_empty


def test_check_duplicate_type_on_node():
    p = make_problem(_priced_nodes(), [stype("A", 100, count=2)], [1.0] * 5)
    report = check_feasibility(Placement({"A-0": "rsu-0", "A-1": "rsu-0"}, 0, {}), p)
    assert [v.entity for v in report.uniqueness_violations] == ["A@rsu-0"]
    assert not report.delay_violations and not report.capacity_violations


def test_check_each_family_in_isolation():
    nodes = [node("n0", 1_000, cap=ResourceVector(2, 4, 40)), node("n1", 1_000)]
    types = [stype("A", 10.0, count=2, demand=ResourceVector(2, 4, 40)), stype("B", 10.0)]
    p = make_problem(nodes, types, [20.0, 5.0], cost_cap=2_500)
    # A-1 on n0 is too slow; B-0 on n0 overflows n0; three instances cost 3,000 > 2,500
    report = check_feasibility(Placement({"A-0": "n1", "A-1": "n0", "B-0": "n0"}, 0, {}), p)
    assert [v.entity for v in report.delay_violations] == ["A-1", "B-0"]
    assert {v.entity for v in report.capacity_violations} == {"n0.cpu", "n0.memory", "n0.storage"}
    assert report.cost_violation[0].measured == 3_000
    assert not report.placement_violations and not report.uniqueness_violations


def test_check_exact_fit_and_threshold_are_feasible():
    nodes = [node("n0", 1_000, cap=ResourceVector(2, 4, 40))]
    p = make_problem(nodes, [stype("A", 10.0)], [10.0], cost_cap=1_000)
    assert check_feasibility(Placement({"A-0": "n0"}, 0, {}), p).is_empty


def test_check_unknown_ids_are_reported():
    p = make_problem(_priced_nodes(), [stype("A", 100)], [1.0] * 5)
    report = check_feasibility(Placement({"A-0": "mars", "Z-9": "core-0"}, 0, {}), p)
    assert len(report.placement_violations) == 3  # unknown node, unknown instance, A-0 unplaced


def test_report_truthiness():
    assert ConstraintReport().is_empty
    assert not ConstraintReport()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_empty_report_implies_cost_and_delay_bounds(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    node_ids = [n.id for n in p.nodes]
    assignment = {s.id: node_ids[int(rng.integers(len(node_ids)))] for s in p.instances}
    placement = make_placement(assignment, p)
    report = check_feasibility(placement, p)
    if report.is_empty:
        assert aggregate_cost(placement, p) <= p.cost_cap
        for inst in p.instances:
            assert placement.per_instance_delay[inst.id] <= p.type_of(inst).delay_threshold
    if not report.capacity_violations:
        for n in p.nodes:
            hosted = [p.type_of(i).demand for i in p.instances if assignment[i.id] == n.id]
            for r in ("cpu", "memory", "storage"):
                assert sum(getattr(d, r) for d in hosted) <= getattr(n.capacity, r)


def test_make_placement_recomputes_cost_and_delay():
    arr = np.array([[[10.0, 1.0], [30.0, 3.0]]])  # one instance, two vehicles, two nodes
    p = make_problem([node("a", 5_000), node("b", 9_000)], [stype("A", 100)], arr)
    pl = make_placement({"A-0": "a"}, p)
    assert pl.total_cost == 5_000
    assert pl.per_instance_delay == {"A-0": 20.0}


def test_problem_invariants():
    with pytest.raises(StructuralError):
        make_problem([node("a", 1)], [stype("A", 10, count=2)], [1.0])  # more instances than nodes
    with pytest.raises(StructuralError):
        make_problem([node("a", 1), node("a", 2)], [stype("A", 10)], [1.0, 1.0])
    p = make_problem([node("a", 1)], [stype("A", 10)], [1.0])
    with pytest.raises(StructuralError):
        type(p)(p.nodes, p.service_types, (ServiceInstance("x", "nope"),), p.delays, 10)
    with pytest.raises(ValueError):
        node("bad", 0)
    with pytest.raises(ValueError):
        stype("bad", 0)
    with pytest.raises(ValueError):
        ResourceVector(-1, 0, 0)


def test_problem_json_round_trip():
    rng = np.random.default_rng(3)
    p = random_problem(rng)
    text = json.dumps(problem_to_dict(p))
    q = problem_from_dict(json.loads(text))
    assert q == p


def test_problem_json_regenerates_from_scenario(default_scenario):
    from covsp.scenario import generate

    spec = default_scenario.with_overrides(vehicle_count=20, seed=11)
    q = problem_from_dict({"scenario": spec.to_dict()})
    assert q == generate(spec)


def test_problem_json_missing_field():
    with pytest.raises(StructuralError):
        problem_from_dict({"nodes": []})
