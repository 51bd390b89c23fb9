import json
import subprocess
import sys
from pathlib import Path

import pytest

from covsp.cli import EXIT_CHECK_FAILED, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main
from covsp.exact import Solution
from covsp.model import check_feasibility, problem_from_dict

FIXTURES = Path(__file__).parent / "fixtures"


def test_generate_paper_setup(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["generate", "--paper-setup", "--vehicles", "30", "--seed", "42", "--out", str(out)]) == EXIT_OK
    p = problem_from_dict(json.loads(out.read_text()))
    assert len(p.nodes) == 10
    assert p.delays.vehicle_count == 30


def test_generate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        main(["generate", "--paper-setup", "--vehicles", "30", "--seed", "42", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()


def test_generate_zero_vehicles_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["generate", "--paper-setup", "--vehicles", "0"])
    assert info.value.code == EXIT_USAGE


def test_generate_with_override(tmp_path):
    out = tmp_path / "inst.json"
    main(["generate", "--vehicles", "50", "--set", "vehicles_per_instance=25", "--out", str(out)])
    p = problem_from_dict(json.loads(out.read_text()))
    assert {t.instance_count for t in p.service_types} == {2}


def test_generate_bad_override(capsys):
    assert main(["generate", "--vehicles", "5", "--set", "no_such_field=1"]) == EXIT_USAGE
    assert "unknown scenario field" in capsys.readouterr().err


def test_solve_both_prints_dominance(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    sol = tmp_path / "sol.json"
    main(["generate", "--vehicles", "40", "--seed", "3", "--out", str(inst)])
    assert main(["solve", str(inst), "--solver", "both", "--out", str(sol)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[exact] objective" in out and "[davsp] objective" in out
    doc = json.loads(sol.read_text())["solutions"]
    exact, davsp = Solution.from_dict(doc["exact"]), Solution.from_dict(doc["davsp"])
    assert davsp.objective >= exact.objective
    p = problem_from_dict(json.loads(inst.read_text()))
    assert check_feasibility(exact.placement, p).is_empty


def test_solve_forced_fixture(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    assert main(["solve", str(FIXTURES / "forced.json"), "--solver", "exact", "--out", str(sol)]) == EXIT_OK
    doc = json.loads(sol.read_text())
    assert doc["objective"] == 15_000
    assert doc["placement"]["assignment"] == {"CAM-0": "rsu-0"}


def test_solve_delay_infeasible(capsys):
    code = main(["solve", str(FIXTURES / "delay_infeasible.json"), "--solver", "both"])
    assert code == EXIT_INFEASIBLE
    out = capsys.readouterr().out
    assert out.count("INFEASIBLE") == 2
    assert "delay threshold" in out


def test_check_solver_output_passes(tmp_path, capsys):
    inst, sol = tmp_path / "inst.json", tmp_path / "sol.json"
    main(["generate", "--vehicles", "20", "--seed", "1", "--out", str(inst)])
    main(["solve", str(inst), "--solver", "both", "--out", str(sol)])
    capsys.readouterr()
    assert main(["check", str(inst), str(sol)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 10 and "FAIL" not in out


def test_check_duplicate_type_on_node(tmp_path, capsys):
    inst, sol = tmp_path / "inst.json", tmp_path / "sol.json"
    main(["generate", "--vehicles", "20", "--seed", "1", "--out", str(inst)])
    main(["solve", str(inst), "--solver", "exact", "--out", str(sol)])
    doc = json.loads(sol.read_text())
    assignment = doc["placement"]["assignment"]
    assignment["CAM-1"] = assignment["CAM-0"]
    sol.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["check", str(inst), str(sol)]) == EXIT_CHECK_FAILED
    lines = capsys.readouterr().out.splitlines()
    assert any(l.strip().startswith("FAIL") and "unique placement" in l for l in lines)


def test_check_cost_over_default_cap(capsys):
    code = main(["check", str(FIXTURES / "over_cap.json"), str(FIXTURES / "over_cap_placement.json")])
    assert code == EXIT_CHECK_FAILED
    out = capsys.readouterr().out
    assert "FAIL  cost cap" in out
    assert "501000 > 500000" in out


def test_check_needs_inputs(capsys):
    assert main(["check"]) == EXIT_USAGE


def test_sweep_row_count_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--paper-setup", "--counts", "10,20", "--trials", "3", "--seed", "7"]
    assert main(args + ["--csv", str(a)]) == EXIT_OK
    main(args + ["--csv", str(b)])
    assert len(a.read_text().splitlines()) == 1 + 2 * 3 * 2
    assert a.read_bytes() == b.read_bytes()


def test_sweep_json_round_trips(tmp_path):
    j = tmp_path / "r.json"
    main(["sweep", "--counts", "10", "--trials", "1", "--seed", "2", "--json", str(j)])
    doc = json.loads(j.read_text())
    assert [r["solver"] for r in doc["rows"]] == ["exact", "davsp"]


def test_sweep_bad_counts():
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--counts", "ten"])
    assert info.value.code == EXIT_USAGE


def test_check_report_on_committed_fixture(capsys):
    assert main(["check", "--report", str(FIXTURES / "sweep_default_seed7.csv")]) == EXIT_OK
    assert "MEDIA_mean_cost non-decreasing" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    out = tmp_path / "i.json"
    proc = subprocess.run(
        [sys.executable, "-m", "covsp", "generate", "--vehicles", "10", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
