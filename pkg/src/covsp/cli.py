"""Command-line front end.

    covsp generate --paper-setup --vehicles 30 --seed 42 --out inst.json
    covsp solve inst.json --solver both --out sol.json
    covsp sweep --paper-setup --counts 10,20,30,40,50 --trials 20 --seed 7 --csv sweep.csv
    covsp check inst.json sol.json
    covsp check --report sweep.csv

Exit codes: 0 success, 1 usage or I/O error, 2 infeasible, 3 constraint check failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from covsp.exact import Infeasible, Solution
from covsp.metrics import (
    SOLVERS,
    read_sweep_csv,
    report_to_csv,
    report_to_json,
    sweep,
    trend_checks,
)
from covsp.model import (
    CONSTRAINT_FAMILIES,
    NodeClass,
    Placement,
    ProblemInstance,
    StructuralError,
    check_feasibility,
    problem_from_dict,
    problem_to_dict,
)
from covsp.scenario import ScenarioSpec, generate, load_paper_setup

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_CHECK_FAILED = 3

FAMILY_LABELS = {
    "delay": "delay threshold (vehicle-averaged delay <= threshold)",
    "capacity": "node capacity (cpu, memory, storage)",
    "placement": "placement (each instance on exactly one node)",
    "uniqueness": "unique placement (one instance per type per node)",
    "cost": "cost cap (total monthly cost <= cap)",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _count_list(text: str) -> list[int]:
    try:
        counts = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError("vehicle counts must be positive")
    return counts


def _add_spec_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--paper-setup", action="store_true", help="use the bundled paper-setup.json (default)")
    src.add_argument("--spec", type=Path, help="scenario spec JSON")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="FIELD=VALUE",
        help="override a scenario field; VALUE is parsed as JSON (repeatable)",
    )


def load_spec(args) -> ScenarioSpec:
    if args.spec is not None:
        base = json.loads(args.spec.read_text())
    else:
        base = load_paper_setup().to_dict()
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects FIELD=VALUE, got {item!r}")
        if key not in base:
            raise UsageError(f"unknown scenario field {key!r}")
        try:
            base[key] = json.loads(raw)
        except json.JSONDecodeError:
            base[key] = raw
    return ScenarioSpec.from_dict(base)


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _dump(doc: Any) -> str:
    return json.dumps(doc, indent=2) + "\n"


def load_problem(path: Path) -> ProblemInstance:
    return problem_from_dict(json.loads(path.read_text()))


# generate -------------------------------------------------------------------


def cmd_generate(args) -> int:
    spec = load_spec(args)
    spec = spec.with_overrides(vehicle_count=args.vehicles, seed=args.seed)
    problem = generate(spec)
    doc = problem_to_dict(problem)
    doc["scenario"] = spec.to_dict()
    _write(args.out, _dump(doc))
    if args.out is not None:
        print(
            f"wrote {args.out}: {len(problem.nodes)} nodes, {len(problem.instances)} instances, "
            f"{problem.delays.vehicle_count} vehicles",
            file=sys.stderr,
        )
    return EXIT_OK


# solve ----------------------------------------------------------------------


def _summary(sol: Solution, problem: ProblemInstance) -> str:
    classes = {n.id: n.node_class for n in problem.nodes}
    lines = [f"[{sol.solver}] objective {sol.objective} $/month (cap {problem.cost_cap}), runtime {sol.runtime_s * 1e3:.2f} ms"]
    for t in problem.service_types:
        placed = [sol.placement.assignment[s.id] for s in problem.instances if s.type_id == t.id]
        core = sum(classes[n] is NodeClass.CORE for n in placed)
        lines.append(f"  {t.id:<8} core {core}  edge {len(placed) - core}")
    return "\n".join(lines)


def cmd_solve(args) -> int:
    problem = load_problem(args.instance)
    names = list(SOLVERS) if args.solver == "both" else [args.solver]
    solutions: dict[str, Solution] = {}
    failed: dict[str, Infeasible] = {}
    for name in names:
        try:
            solutions[name] = SOLVERS[name](problem)
        except Infeasible as exc:
            failed[name] = exc

    for name in names:
        if name in solutions:
            print(_summary(solutions[name], problem))
        else:
            exc = failed[name]
            print(f"[{name}] INFEASIBLE: binding constraint: {FAMILY_LABELS[exc.constraint]}; {exc}")
    if len(solutions) == 2:
        gap = solutions["davsp"].objective - solutions["exact"].objective
        print(f"davsp - exact = {gap} $/month")

    if solutions:
        if len(names) == 1:
            doc = solutions[names[0]].to_dict()
        else:
            doc = {"solutions": {n: s.to_dict() for n, s in solutions.items()}}
        if args.out is not None:
            args.out.write_text(_dump(doc))
    return EXIT_INFEASIBLE if failed else EXIT_OK


# sweep ----------------------------------------------------------------------


def cmd_sweep(args) -> int:
    spec = load_spec(args)
    solvers = list(SOLVERS) if args.solver == "both" else [args.solver]
    start = time.perf_counter()
    report = sweep(spec, args.counts, trials=args.trials, base_seed=args.seed, solvers=solvers, workers=args.workers)
    if args.csv is None and args.json is None:
        _write(None, report_to_csv(report))
    if args.csv is not None:
        args.csv.write_text(report_to_csv(report))
    if args.json is not None:
        args.json.write_text(report_to_json(report, include_timings=args.timings))
    infeasible = sum(not r.feasible for r in report.rows)
    print(
        f"sweep: {len(report.rows)} rows ({infeasible} infeasible) in {time.perf_counter() - start:.2f} s",
        file=sys.stderr,
    )
    return EXIT_OK


# check ----------------------------------------------------------------------


def _placements_in(doc: dict) -> list[tuple[str, Placement]]:
    if "solutions" in doc:
        return [(name, Placement.from_dict(s["placement"])) for name, s in doc["solutions"].items()]
    if "placement" in doc:
        return [(doc.get("solver", "placement"), Placement.from_dict(doc["placement"]))]
    if "assignment" in doc:
        return [("placement", Placement.from_dict(doc))]
    raise StructuralError("placement file has neither 'solutions', 'placement' nor 'assignment'")


def cmd_check(args) -> int:
    if args.report is not None:
        return _check_report(args)
    if args.instance is None or args.placement is None:
        raise UsageError("check needs INSTANCE and PLACEMENT, or --report CSV")
    problem = load_problem(args.instance)
    ok = True
    for name, placement in _placements_in(json.loads(args.placement.read_text())):
        report = check_feasibility(placement, problem)
        print(f"[{name}]")
        for fam in CONSTRAINT_FAMILIES:
            violations = report.family(fam)
            print(f"  {'PASS' if not violations else 'FAIL'}  {FAMILY_LABELS[fam]}")
            for v in violations:
                print(f"        {v.entity}: {v.measured:g} > {v.bound:g}" if fam != "placement" else f"        {v.entity}: placed {v.measured:g} times, expected {v.bound:g}")
        ok = ok and report.is_empty
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _check_report(args) -> int:
    spec = load_spec(args)
    records = read_sweep_csv(args.report.read_text())
    results = trend_checks(records, spec)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  [{r.detail}]")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


# entry ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covsp", description="Cost-optimal V2X service placement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a problem instance from a scenario")
    _add_spec_args(g)
    g.add_argument("--vehicles", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve a problem instance")
    s.add_argument("instance", type=Path)
    s.add_argument("--solver", choices=["exact", "davsp", "both"], required=True)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="vehicle-count sweep with repeated seeded trials")
    _add_spec_args(w)
    w.add_argument("--counts", type=_count_list, required=True, help="e.g. 10,20,30,40,50")
    w.add_argument("--trials", type=_positive_int, default=20)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--solver", choices=["exact", "davsp", "both"], default="both")
    w.add_argument("--csv", type=Path)
    w.add_argument("--json", type=Path)
    w.add_argument("--timings", action="store_true", help="include wall-clock runtimes in the JSON report")
    w.add_argument("--workers", type=_positive_int, default=1)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="audit a placement, or run trend checks on a sweep CSV")
    _add_spec_args(c)
    c.add_argument("instance", type=Path, nargs="?")
    c.add_argument("placement", type=Path, nargs="?")
    c.add_argument("--report", type=Path, help="sweep CSV to run the trend checks on")
    c.set_defaults(func=cmd_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, StructuralError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"covsp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
