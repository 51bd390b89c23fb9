"""Per-run metrics and vehicle-count sweeps.

A sweep generates one problem per (vehicle count, trial), solves it with
each solver and records per-service mean cost and delay plus CPU
utilization per node class. Reports export to CSV (one row per trial and
solver, the regression fixture format) and nested JSON.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from covsp.exact import Infeasible, Solution, solve_exact
from covsp.heuristic import solve_davsp
from covsp.model import NodeClass, ProblemInstance, check_feasibility
from covsp.scenario import ScenarioSpec, child_seed, generate

SOLVERS: dict[str, Callable[[ProblemInstance], Solution]] = {
    "exact": solve_exact,
    "davsp": solve_davsp,
}

UTIL_KEYS = ("core", "edge", "enb", "rsu")


@dataclass(frozen=True)
class ServiceMetrics:
    instances: int
    mean_cost: float
    mean_delay: float
    on_core: int


@dataclass(frozen=True)
class RunMetrics:
    solver: str
    objective: int
    services: Mapping[str, ServiceMetrics]
    cpu_utilization: Mapping[str, float]
    runtime_s: float = 0.0


def compute_metrics(solution: Solution, problem: ProblemInstance) -> RunMetrics:
    report = check_feasibility(solution.placement, problem)
    if not report.is_empty:
        raise ValueError(f"cannot compute metrics of an infeasible placement: {report.to_dict()}")

    nodes = {n.id: n for n in problem.nodes}
    types = {t.id: t for t in problem.service_types}
    costs: dict[str, list[int]] = {t.id: [] for t in problem.service_types}
    delays: dict[str, list[float]] = {t.id: [] for t in problem.service_types}
    on_core = {t.id: 0 for t in problem.service_types}
    used = {cls: 0.0 for cls in NodeClass}
    for inst in problem.instances:
        node = nodes[solution.placement.assignment[inst.id]]
        costs[inst.type_id].append(node.hosting_cost)
        delays[inst.type_id].append(solution.placement.per_instance_delay[inst.id])
        on_core[inst.type_id] += node.node_class is NodeClass.CORE
        used[node.node_class] += types[inst.type_id].demand.cpu

    capacity = {cls: 0.0 for cls in NodeClass}
    for n in problem.nodes:
        capacity[n.node_class] += n.capacity.cpu

    def ratio(classes):
        cap = sum(capacity[c] for c in classes)
        return sum(used[c] for c in classes) / cap if cap else 0.0

    util = {
        "core": ratio([NodeClass.CORE]),
        "edge": ratio([NodeClass.ENB, NodeClass.RSU]),
        "enb": ratio([NodeClass.ENB]),
        "rsu": ratio([NodeClass.RSU]),
    }
    services = {
        t: ServiceMetrics(
            instances=len(costs[t]),
            mean_cost=sum(costs[t]) / len(costs[t]),
            mean_delay=sum(delays[t]) / len(delays[t]),
            on_core=on_core[t],
        )
        for t in costs
    }
    return RunMetrics(
        solver=solution.solver,
        objective=solution.objective,
        services=services,
        cpu_utilization=util,
        runtime_s=solution.runtime_s,
    )


@dataclass(frozen=True)
class SweepRow:
    vehicle_count: int
    trial: int
    seed: int
    solver: str
    metrics: RunMetrics | None  # None when infeasible
    infeasible_reason: str = ""
    placement: Mapping[str, str] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.metrics is not None


@dataclass
class SweepReport:
    spec: ScenarioSpec
    vehicle_counts: list[int]
    trials: int
    base_seed: int
    rows: list[SweepRow]

    def service_ids(self) -> list[str]:
        return [s.id for s in self.spec.service_catalog]

    def aggregate(self) -> list[dict[str, Any]]:
        """Trial means per (vehicle count, solver) over feasible rows."""
        out = []
        for v in self.vehicle_counts:
            for solver in _solvers_in(self.rows):
                ok = [r.metrics for r in self.rows if r.vehicle_count == v and r.solver == solver and r.feasible]
                entry: dict[str, Any] = {
                    "vehicle_count": v,
                    "solver": solver,
                    "feasible_trials": len(ok),
                }
                if ok:
                    entry["objective"] = _mean(m.objective for m in ok)
                    for sid in self.service_ids():
                        entry[f"{sid}_mean_cost"] = _mean(m.services[sid].mean_cost for m in ok)
                        entry[f"{sid}_mean_delay"] = _mean(m.services[sid].mean_delay for m in ok)
                    for k in UTIL_KEYS:
                        entry[f"util_{k}"] = _mean(m.cpu_utilization[k] for m in ok)
                out.append(entry)
        return out


def _mean(xs: Iterable[float]) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def _solvers_in(rows: Sequence[SweepRow]) -> list[str]:
    seen: list[str] = []
    for r in rows:
        if r.solver not in seen:
            seen.append(r.solver)
    return seen


def run_cell(spec: ScenarioSpec, vehicle_count: int, trial: int, base_seed: int, solvers: Sequence[str]) -> list[SweepRow]:
    seed = child_seed(base_seed, vehicle_count, trial)
    problem = generate(spec.with_overrides(vehicle_count=vehicle_count, seed=seed))
    rows = []
    for name in solvers:
        try:
            sol = SOLVERS[name](problem)
        except Infeasible as exc:
            rows.append(SweepRow(vehicle_count, trial, seed, name, None, f"{exc.constraint}: {exc}"))
            continue
        rows.append(
            SweepRow(vehicle_count, trial, seed, name, compute_metrics(sol, problem), "", dict(sol.placement.assignment))
        )
    return rows


def _run_cell_args(args):
    return run_cell(*args)


def sweep(
    spec: ScenarioSpec,
    vehicle_counts: Sequence[int],
    trials: int = 20,
    base_seed: int = 0,
    solvers: Sequence[str] = ("exact", "davsp"),
    workers: int = 1,
) -> SweepReport:
    if not vehicle_counts:
        raise ValueError("vehicle_counts is empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for name in solvers:
        if name not in SOLVERS:
            raise ValueError(f"unknown solver {name!r}")
    cells = [(spec, v, t, base_seed, tuple(solvers)) for v in vehicle_counts for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map() yields in submission order, keeping the report deterministic
            chunks = list(pool.map(_run_cell_args, cells))
    else:
        chunks = [run_cell(*c) for c in cells]
    rows = [r for chunk in chunks for r in chunk]
    return SweepReport(spec, list(vehicle_counts), trials, base_seed, rows)


# Export ---------------------------------------------------------------------


def csv_columns(service_ids: Sequence[str]) -> list[str]:
    cols = ["vehicle_count", "trial", "seed", "solver", "status", "objective"]
    for sid in service_ids:
        cols += [f"{sid}_instances", f"{sid}_mean_cost", f"{sid}_mean_delay", f"{sid}_on_core"]
    cols += [f"util_{k}" for k in UTIL_KEYS]
    return cols


def _row_record(row: SweepRow, service_ids: Sequence[str]) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "vehicle_count": row.vehicle_count,
        "trial": row.trial,
        "seed": row.seed,
        "solver": row.solver,
        "status": "ok" if row.feasible else "infeasible",
    }
    m = row.metrics
    rec["objective"] = m.objective if m else ""
    for sid in service_ids:
        sm = m.services[sid] if m else None
        rec[f"{sid}_instances"] = sm.instances if sm else ""
        rec[f"{sid}_mean_cost"] = repr(sm.mean_cost) if sm else ""
        rec[f"{sid}_mean_delay"] = repr(sm.mean_delay) if sm else ""
        rec[f"{sid}_on_core"] = sm.on_core if sm else ""
    for k in UTIL_KEYS:
        rec[f"util_{k}"] = repr(m.cpu_utilization[k]) if m else ""
    return rec


def report_to_csv(report: SweepReport) -> str:
    sids = report.service_ids()
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=csv_columns(sids), lineterminator="\n")
    writer.writeheader()
    for row in report.rows:
        writer.writerow(_row_record(row, sids))
    return buf.getvalue()


def report_to_json(report: SweepReport, include_timings: bool = False) -> str:
    sids = report.service_ids()
    rows = []
    for row in report.rows:
        rec = _row_record(row, sids)
        for key, val in list(rec.items()):
            if isinstance(val, str) and key not in ("solver", "status") and val:
                rec[key] = float(val)
        rec["infeasible_reason"] = row.infeasible_reason
        rec["placement"] = dict(row.placement)
        if include_timings and row.metrics:
            rec["runtime_s"] = row.metrics.runtime_s
        rows.append(rec)
    doc = {
        "spec": report.spec.to_dict(),
        "vehicle_counts": report.vehicle_counts,
        "trials": report.trials,
        "base_seed": report.base_seed,
        "rows": rows,
        "aggregate": report.aggregate(),
    }
    return json.dumps(doc, indent=2) + "\n"


def read_sweep_csv(text: str) -> list[dict[str, Any]]:
    """Parse a sweep CSV into typed records (empty cells become None)."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        typed: dict[str, Any] = {}
        for k, v in rec.items():
            if k in ("solver", "status"):
                typed[k] = v
            elif v == "":
                typed[k] = None
            elif k in ("vehicle_count", "trial", "seed", "objective") or k.endswith(("_instances", "_on_core")):
                typed[k] = int(v)
            else:
                typed[k] = float(v)
        out.append(typed)
    return out


# Trend checks ---------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _series(records, solver, key):
    """{vehicle_count: [per-trial values]} over feasible rows."""
    out: dict[int, list[float]] = {}
    for r in records:
        if r["solver"] == solver and r["status"] == "ok":
            out.setdefault(r["vehicle_count"], []).append(r[key])
    return dict(sorted(out.items()))


def _means(series):
    return {v: float(np.mean(xs)) for v, xs in series.items()}


def check_dominance(records) -> CheckResult:
    """DA-VSP never beats the exact optimum, trial by trial."""
    exact = {(r["vehicle_count"], r["trial"]): r for r in records if r["solver"] == "exact"}
    bad = []
    gaps = []
    for r in records:
        if r["solver"] != "davsp":
            continue
        e = exact.get((r["vehicle_count"], r["trial"]))
        if e is None:
            continue
        if e["status"] != "ok":
            if r["status"] == "ok":
                bad.append(f"v={r['vehicle_count']} t={r['trial']}: davsp feasible but exact infeasible")
            continue
        if r["status"] != "ok":
            bad.append(f"v={r['vehicle_count']} t={r['trial']}: davsp infeasible")
            continue
        if r["objective"] < e["objective"]:
            bad.append(f"v={r['vehicle_count']} t={r['trial']}: {r['objective']} < {e['objective']}")
        gaps.append((r["objective"] - e["objective"]) / e["objective"])
    detail = f"{len(gaps)} paired trials" + (f"; violations: {bad[:3]}" if bad else "")
    return CheckResult("heuristic >= exact on every trial", not bad and bool(gaps), detail)


def mean_gap(records) -> float:
    exact = {(r["vehicle_count"], r["trial"]): r for r in records if r["solver"] == "exact" and r["status"] == "ok"}
    gaps = [
        (r["objective"] - exact[k]["objective"]) / exact[k]["objective"]
        for r in records
        if r["solver"] == "davsp" and r["status"] == "ok" and (k := (r["vehicle_count"], r["trial"])) in exact
    ]
    return float(np.mean(gaps)) if gaps else math.nan


def check_gap(records, limit: float = 0.10) -> CheckResult:
    g = mean_gap(records)
    return CheckResult(f"mean heuristic gap <= {limit:.0%}", bool(g <= limit), f"mean gap {g:.4%}")


def check_nondecreasing(records, solver: str, key: str, atol: float = 1e-9) -> CheckResult:
    m = _means(_series(records, solver, key))
    counts = list(m)
    bad = [(a, b) for a, b in zip(counts, counts[1:]) if m[b] < m[a] - atol]
    return CheckResult(
        f"{solver}: {key} non-decreasing in vehicles",
        not bad and len(counts) > 1,
        ", ".join(f"{v}:{m[v]:.6g}" for v in counts),
    )


def check_nonincreasing_noisy(records, solver: str, key: str, alpha: float = 0.05) -> CheckResult:
    """Trial means never rise significantly and end below where they start.

    Each adjacent step is a one-sided z-test; the steps form one family, so
    each is run at ``alpha / steps`` (Bonferroni). Steps whose expected
    values coincide would otherwise fail a plain comparison half the time.
    """
    series = _series(records, solver, key)
    counts = list(series)
    m = _means(series)
    steps = max(len(counts) - 1, 1)
    z_crit = float(stats.norm.ppf(1 - alpha / steps))
    bad = []
    worst = -math.inf
    for a, b in zip(counts, counts[1:]):
        xa, xb = np.asarray(series[a]), np.asarray(series[b])
        se = math.sqrt(_var(xa) / len(xa) + _var(xb) / len(xb))
        rise = m[b] - m[a]
        z = rise / se if se > 0 else (math.inf if rise > 0 else -math.inf)
        worst = max(worst, z)
        if z > z_crit:
            bad.append((a, b))
    overall = len(counts) > 1 and m[counts[-1]] < m[counts[0]]
    return CheckResult(
        f"{solver}: {key} non-increasing in vehicles",
        not bad and overall,
        ", ".join(f"{v}:{m[v]:.6g}" for v in counts)
        + f"; max step z={worst:.2f} (limit {z_crit:.2f})"
        + (f"; significant rises {bad}" if bad else ""),
    )


def _var(x: np.ndarray) -> float:
    return float(np.var(x, ddof=1)) if len(x) > 1 else 0.0


def check_constant(records, solver: str, key: str, value: float, atol: float = 1e-9) -> CheckResult:
    vals = [r[key] for r in records if r["solver"] == solver and r["status"] == "ok"]
    bad = [v for v in vals if abs(v - value) > atol]
    return CheckResult(f"{solver}: {key} == {value:g} on every trial", not bad and bool(vals), f"{len(vals)} trials, {len(bad)} off")


def check_no_trend(records, solver: str, key: str, alpha: float = 0.05) -> CheckResult:
    """Kendall's tau of per-trial values against vehicle count is not significant."""
    xs, ys = [], []
    for v, vals in _series(records, solver, key).items():
        xs += [v] * len(vals)
        ys += vals
    tau, p = stats.kendalltau(xs, ys)
    return CheckResult(f"{solver}: {key} has no monotone trend", bool(p > alpha), f"tau={tau:.3f} p={p:.3f}")


def check_core_plateau(records, solver: str, service: str, core_count: int, atol: float = 1e-9) -> CheckResult:
    """Core utilization stays put once ``service`` fills every core node."""
    series = _series(records, solver, "util_core")
    full = _series(records, solver, f"{service}_on_core")
    saturated = [v for v in series if all(k == core_count for k in full[v])]
    m = _means(series)
    vals = [m[v] for v in saturated]
    ok = len(vals) >= 1 and max(vals) - min(vals) <= atol
    return CheckResult(
        f"{solver}: core utilization constant once {service} fills the core",
        ok,
        f"saturated at {saturated}: " + ", ".join(f"{x:.6g}" for x in vals),
    )


def trend_checks(records, spec: ScenarioSpec, media: str = "MEDIA", pinned: Sequence[str] = ("CAM", "DENM")) -> list[CheckResult]:
    """The figure-level checks run against a default-scenario sweep."""
    results = [check_dominance(records), check_gap(records)]
    for solver in _solvers_in_records(records):
        for sid in pinned:
            results.append(check_constant(records, solver, f"{sid}_mean_cost", spec.edge_cost))
            results.append(check_constant(records, solver, f"{sid}_on_core", 0))
            results.append(check_no_trend(records, solver, f"{sid}_mean_delay"))
        results.append(check_nondecreasing(records, solver, f"{media}_mean_cost"))
        results.append(check_nonincreasing_noisy(records, solver, f"{media}_mean_delay"))
        results.append(check_nondecreasing(records, solver, "util_edge"))
        results.append(check_core_plateau(records, solver, media, spec.core_count))
    return results


def _solvers_in_records(records) -> list[str]:
    seen: list[str] = []
    for r in records:
        if r["solver"] not in seen:
            seen.append(r["solver"])
    return seen
