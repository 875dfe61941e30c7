"""
End-to-end tests of the mg-planner command line
"""
import json

import pytest

from conftest import ROOT, create_sample_document
from mg_planner.cli import EXIT_FAILED, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_OK, build_parser, main
from mg_planner.robust_engine import restore_box, restore_scenarios


@pytest.fixture(autouse=True)
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("MG_PLANNER_BACKEND", "MG_PLANNER_TIME_LIMIT", "MG_PLANNER_LOG_LEVEL", "MG_PLANNER_OUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    return tmp_path


@pytest.fixture
def two_node_file(workspace):
    path = workspace / "two_node.json"
    doc = create_sample_document([[2.0], [2.0]], q_loads=[[0.5], [0.5]], name="two_node")
    path.write_text(json.dumps(doc))
    return str(path)


def read_json(path):
    with open(path) as f:
        return json.load(f)


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    args = build_parser().parse_args(["robust", "case.json", "--load-ub", "1.2", "--workers", "2"])
    assert args.command == "robust" and args.load_ub == 1.2 and args.workers == 2


def test_plan_writes_artifacts(two_node_file, workspace):
    out = workspace / "det"
    assert main(["plan", two_node_file, "--out-dir", str(out), "--export-lp", str(workspace / "det.lp")]) == EXIT_OK

    doc = read_json(out / "plan.json")
    assert doc["schema"] == "mg-planner/plan/1"
    assert doc["lines"] == [{"year": 0, "i": 0, "j": 1, "count": 1}]
    assert len(doc["generators"][0]) == 1
    assert doc["objective"] == pytest.approx((1150.0 + 1.0 + 8.0) / 1.1, rel=1e-4)
    assert "Total cost" in (out / "summary.txt").read_text()
    assert (workspace / "det.lp").read_text().startswith("\\ Model deterministic")
    assert list((workspace / "logs").glob("session_*.json"))


def test_robust_writes_artifacts_and_resumes(two_node_file, workspace):
    out = workspace / "robust"
    assert main(["robust", two_node_file, "--load-ub", "1.5", "--out-dir", str(out)]) == EXIT_OK

    robust = read_json(out / "robust.json")
    assert robust["schema"] == "mg-planner/robust/1"
    assert robust["iterations"] >= 2
    assert robust["scenarios_by_origin"]["deterministic"] == 1
    assert robust["plan"]["generators"] == [[0, 1]]
    assert robust["objective_monotone"] is True
    assert all(entry["objective_decrease"] == 0.0 for entry in robust["audit"])
    assert read_json(out / "plan.json")["generators"] == [[0, 1]]
    with open(out / "scenarios.jsonl") as f:
        scenarios = restore_scenarios(f)
    assert len(scenarios) == robust["scenarios_total"]

    resumed = workspace / "resumed"
    assert main(["robust", two_node_file, "--load-ub", "1.5", "--scenarios", str(out / "scenarios.jsonl"),
                 "--out-dir", str(resumed)]) == EXIT_OK
    assert read_json(resumed / "robust.json")["iterations"] == 1



def test_joint_generation_adversary_flag(two_node_file, workspace):
    assert main(["robust", two_node_file, "--load-ub", "1.5", "--generation-adversary", "joint",
                 "--out-dir", "joint"]) == EXIT_OK
    robust = read_json(workspace / "joint" / "robust.json")
    assert robust["plan"]["settings"]["robust"]["generation_adversary"] == "joint"
    assert robust["plan"]["generators"] == [[0, 1]]

def test_point_box_matches_the_deterministic_plan(two_node_file, workspace):
    assert main(["plan", two_node_file, "--out-dir", "det"]) == EXIT_OK
    assert main(["robust", two_node_file, "--load-lb", "1", "--load-ub", "1", "--out-dir", "rob"]) == EXIT_OK
    det, rob = read_json(workspace / "det" / "plan.json"), read_json(workspace / "rob" / "plan.json")
    assert det["lines"] == rob["lines"]
    assert len(det["generators"][0]) == len(rob["generators"][0])
    assert det["objective"] == pytest.approx(rob["objective"], rel=1e-6)


def test_check_and_audit(two_node_file, workspace):
    assert main(["plan", two_node_file, "--out-dir", "det"]) == EXIT_OK
    assert main(["robust", two_node_file, "--load-ub", "1.5", "--out-dir", "rob"]) == EXIT_OK
    scenarios = str(workspace / "rob" / "scenarios.jsonl")

    assert main(["check", two_node_file, str(workspace / "det" / "plan.json")]) == EXIT_OK
    assert main(["check", two_node_file, str(workspace / "rob" / "robust.json"), scenarios]) == EXIT_OK
    assert main(["check", two_node_file, str(workspace / "det" / "plan.json"), scenarios]) == EXIT_FAILED

    assert main(["audit", two_node_file, str(workspace / "det" / "plan.json"), "--load-ub", "1.5",
                 "--out-dir", "audit"]) == EXIT_OK
    with open(workspace / "audit" / "scenarios.jsonl") as f:
        assert restore_scenarios(f)
    assert main(["audit", two_node_file, str(workspace / "rob" / "plan.json"), "--load-ub", "1.5",
                 "--out-dir", "audit_rob"]) == EXIT_OK
    assert (workspace / "audit_rob" / "scenarios.jsonl").read_text() == ""


def test_chance_box(workspace):
    case = str(ROOT / "cases" / "three_node.json")
    assert main(["chance", case, "--epsilon", "0.05", "--samples", "20000", "--out-dir", "chance"]) == EXIT_OK
    with open(workspace / "chance" / "box.jsonl") as f:
        box = restore_box(f)
    assert box.shape == (3, 2)
    assert box.p_lo[0, 0] < 40.0 < box.p_hi[0, 0]


def test_iteration_cap_exit_code(two_node_file, workspace):
    code = main(["robust", two_node_file, "--load-ub", "1.5", "--max-iterations", "1", "--out-dir", "capped"])
    assert code == EXIT_NONCONVERGED
    audit = read_json(workspace / "capped" / "audit.json")
    assert len(audit["audit"]) == 1


@pytest.mark.parametrize("argv", [
    ["plan", "missing.json"],
    ["robust", "{case}", "--epsilon", "0.05", "--load-ub", "1.2"],
    ["robust", "{case}", "--load-lb", "1.2", "--load-ub", "1.5"],
    ["plan", "{case}", "--btn-accuracy", "2"],
    ["chance", "{case}", "--epsilon", "0.05"],
    ["check", "{case}", "{case}"],
])
def test_input_errors(two_node_file, argv, capsys):
    argv = [a.replace("{case}", two_node_file) for a in argv]
    assert main(argv) == EXIT_INPUT
    assert "Error" in capsys.readouterr().err


def test_malformed_case_is_an_input_error(workspace):
    bad = workspace / "bad.json"
    bad.write_text("{not json")
    assert main(["plan", str(bad)]) == EXIT_INPUT
