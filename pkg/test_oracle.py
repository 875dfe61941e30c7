"""
Cross-checks of the MILP and the adversaries against the brute-force references
"""
import json
import math

import pytest

from conftest import (
    ROOT, create_line_case, create_sample_document, create_single_node_case, create_two_node_case, plan_from_lists
)
from mg_planner.core_model import Tolerances, check_plan, parse_case, plan_components
from mg_planner.exceptions import EnumerationGuardError
from mg_planner.formulation import ConeApproxConfig, build_deterministic
from mg_planner.oracle import (
    enumerate_designs, enumerate_vertex_adversary, evaluate_constraints, solve_exact_operation, vertex_residuals
)
from mg_planner.robust_engine import (
    Scenario, TargetMask, UncertaintyBox, adversarial_generation, adversarial_thermal, adversary_sweep,
    corrective_generation, corrective_thermal
)
from mg_planner.solver_gateway import extract, polish, solve


REALISTIC = {"r": 0.32, "x": 0.35, "v_min": 12.35, "v_max": 13.65, "cos_phi_min": 0.85, "theta_delta": 0.35}


def solve_deterministic(case, cone_cfg, solve_opts):
    model = build_deterministic(case, cone_cfg)
    return extract(model, polish(model, solve(model.instance, solve_opts), solve_opts))


def load_three_node_case():
    with open(ROOT / "cases" / "three_node.json") as f:
        return parse_case(json.load(f))


def create_feeder_case(p_load, s_rating, p_gen_max=None):
    """A 13 kV feeder: generator site at node 0, one load 1 km away"""
    electrical = dict(REALISTIC, s_rating=s_rating, p_gen_max=p_gen_max or 2.0 * p_load)
    doc = create_sample_document([[0.0], [p_load]], q_loads=[[0.0], [0.25 * p_load]], electrical=electrical)
    return parse_case(doc)


def create_two_period_case():
    """Two nodes over two periods: eight uncertain coordinates"""
    return parse_case(create_sample_document([[2.0, 1.0], [2.0, 1.0]], q_loads=[[0.5, 0.25], [0.5, 0.25]]))


@pytest.fixture
def accurate_cfg():
    return ConeApproxConfig(accuracy_eps=1e-8, level_cap=16)


def test_exact_operation_modes(single_node_case):
    plan = plan_from_lists(single_node_case, [], [0])
    p, q = single_node_case.period_loads
    fuel, state = solve_exact_operation(single_node_case, plan, p, q)
    # 0.2 $/kWh * 2 kW * 10 h, discounted one year
    assert fuel == pytest.approx(4.0 / 1.1, rel=1e-5)
    assert state.p_gen[0, 0] == pytest.approx(2.0, abs=1e-5)

    heavy = p * 1.5
    assert solve_exact_operation(single_node_case, plan, heavy, q) == (math.inf, None)
    shed, state = solve_exact_operation(single_node_case, plan, heavy, q, mode="shed")
    assert shed == pytest.approx(1.0, abs=1e-5)
    assert state.p_shed[0, 0] == pytest.approx(1.0, abs=1e-5)


# ----------------------------------------------------------------------------
# Adversaries against the vertex oracle
# ----------------------------------------------------------------------------

# (case builder, lines, generators, box factors, masked (node, period) entries)
GENERATION_FIXTURES = {
    "single_node": (create_single_node_case, [], [0], (0.75, 1.25), [(0, 0)]),
    "two_node": (create_two_node_case, [(0, 1, 1)], [0], (1.0, 1.5), [(1, 0)]),
    "two_node_two_periods": (create_two_period_case, [(0, 1, 1)], [0], (0.5, 1.5), [(1, 0), (1, 1)]),
    "three_node_feeders": (load_three_node_case, [(0, 1, 1), (0, 2, 1)], [0], (1.0, 1.3), [(0, 1)]),
    "realistic_feeder": (lambda: create_feeder_case(125.0, 500.0, p_gen_max=130.0), [(0, 1, 1)], [0],
                         (1.0, 1.2), [(1, 0)]),
    "two_generators": (create_two_node_case, [(0, 1, 1)], [0, 1], (1.0, 1.5), [(1, 0)]),
}

# (case builder, box factors, masked (i, j, period) entries)
THERMAL_FIXTURES = {
    "small_line": (create_line_case, (0.75, 1.5), [(0, 1, 0)]),
    "realistic_feeder": (lambda: create_feeder_case(125.0, 120.0), (1.0, 1.2), [(0, 1, 0)]),
    "wide_feeder": (lambda: create_feeder_case(500.0, 600.0), (1.0, 1.3), [(0, 1, 0)]),
}


@pytest.mark.parametrize("name", sorted(GENERATION_FIXTURES))
def test_generation_adversary_matches_every_vertex(name, accurate_cfg):
    build, lines, generators, (lo, hi), entries = GENERATION_FIXTURES[name]
    case = build()
    plan = plan_from_lists(case, lines, generators)
    box = UncertaintyBox.from_factors(case, lo, hi)
    mask = TargetMask.generation(entries)

    scenario, objective = adversarial_generation(case, plan, box, mask, accurate_cfg)
    _, best = enumerate_vertex_adversary(case, plan, box, "generation", mask)
    assert objective == pytest.approx(best, rel=1e-6, abs=1e-6)
    assert corrective_generation(case, plan, scenario, accurate_cfg, periods=mask.periods) == pytest.approx(
        best, rel=1e-6, abs=1e-6)
    if name == "two_generators":
        assert best == pytest.approx(0.0, abs=1e-6)
    else:
        assert best > 1e-3


def test_two_period_adversary_covers_all_vertices():
    case = create_two_period_case()
    plan = plan_from_lists(case, [(0, 1, 1)], [0])
    box = UncertaintyBox.from_factors(case, 0.5, 1.5)
    mask = TargetMask.generation([(1, 0), (1, 1)])
    assert len(vertex_residuals(case, plan, box, "generation", mask, workers=2)) == 2 ** 8


@pytest.mark.parametrize("name", sorted(THERMAL_FIXTURES))
def test_thermal_adversary_matches_every_vertex(name, accurate_cfg):
    build, (lo, hi), entries = THERMAL_FIXTURES[name]
    case = build()
    plan = plan_from_lists(case, [(0, 1, 1)], [0])
    box = UncertaintyBox.from_factors(case, lo, hi)
    mask = TargetMask.thermal(entries)

    scenario, _ = adversarial_thermal(case, plan, box, mask, accurate_cfg)
    reference, best = enumerate_vertex_adversary(case, plan, box, "thermal", mask)
    assert scenario.fingerprint == reference.fingerprint
    assert best > 0.0
    assert corrective_thermal(case, plan, scenario, accurate_cfg) == pytest.approx(best, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("name", ["single_node", "two_node", "two_generators"])
def test_sweep_is_empty_exactly_when_no_vertex_sheds(name, accurate_cfg):
    build, lines, generators, (lo, hi), _ = GENERATION_FIXTURES[name]
    case = build()
    plan = plan_from_lists(case, lines, generators)
    box = UncertaintyBox.from_factors(case, lo, hi)
    _, best = enumerate_vertex_adversary(case, plan, box, "generation")
    assert bool(adversary_sweep(case, plan, box, accurate_cfg)) == (best > 1e-6)


@pytest.mark.parametrize("p_load, s_rating", [(125.0, 120.0), (600.0, 500.0)])
def test_thermal_slack_at_realistic_ratings(p_load, s_rating, cone_cfg):
    case = create_feeder_case(p_load, s_rating)
    plan = plan_from_lists(case, [(0, 1, 1)], [0])
    scenario = Scenario.deterministic(case)
    exact, _ = solve_exact_operation(case, plan, scenario.p_load, scenario.q_load, mode="slack")
    approximate = corrective_thermal(case, plan, scenario, cone_cfg)
    assert exact > 0.0
    # outer cones admit at most the exact excess, and lose at most a relative eps of the squared rating
    assert approximate <= exact * (1.0 + 1e-5) + 1e-5
    assert approximate >= exact - 2.0 * cone_cfg.admitted_eps * (2.0 * s_rating ** 2 + exact)


def test_vertex_residuals_cover_every_vertex(two_node_case):
    plan = plan_from_lists(two_node_case, [(0, 1, 1)], [0, 1])
    box = UncertaintyBox.from_factors(two_node_case, 0.5, 1.5)
    results = vertex_residuals(two_node_case, plan, box, "generation", workers=2)
    assert len(results) == 2 ** 4
    assert len({s.fingerprint for s, _ in results}) == 16
    assert all(value == pytest.approx(0.0, abs=1e-5) for _, value in results)


def test_vertex_guard():
    doc = create_sample_document([[1.0]] * 11, q_loads=[[0.5]] * 11)
    case = parse_case(doc)
    plan = plan_from_lists(case, [(i, i + 1, 1) for i in range(10)], [0])
    box = UncertaintyBox.from_factors(case, 0.5, 1.5)
    with pytest.raises(EnumerationGuardError):
        vertex_residuals(case, plan, box, "generation")
    with pytest.raises(ValueError):
        vertex_residuals(case, plan, box, "voltage")


# ----------------------------------------------------------------------------
# Planning MILP against design enumeration
# ----------------------------------------------------------------------------

DESIGN_FIXTURES = {
    "single_node": create_single_node_case,
    "two_node": create_two_node_case,
    "two_node_two_generators": lambda: parse_case(create_sample_document([[3.0], [3.0]],
                                                                         q_loads=[[0.5], [0.5]])),
    "three_node_line": lambda: parse_case(create_sample_document(
        [[1.0, 2.0], [2.0, 1.0], [1.5, 1.5]], q_loads=[[0.2, 0.4], [0.4, 0.2], [0.3, 0.3]])),
    "three_node_feeders": load_three_node_case,
    "four_node_line": lambda: parse_case(create_sample_document([[1.0]] * 4, q_loads=[[0.25]] * 4)),
}


@pytest.mark.parametrize("name", sorted(DESIGN_FIXTURES))
def test_design_oracle_matches_the_milp(name, cone_cfg, solve_opts):
    case = DESIGN_FIXTURES[name]()
    plan, _, money = solve_deterministic(case, cone_cfg, solve_opts)
    best = enumerate_designs(case)
    assert best is not None and best.evaluated >= 1
    assert plan_components(plan, 0) == plan_components(best.plan, 0) == 1
    assert len(plan.generators(0)) == len(best.plan.generators(0))
    assert money.npv == pytest.approx(best.objective, rel=1e-4)


def test_design_oracle_matches_two_node_plan(two_node_case, cone_cfg, solve_opts):
    plan, _, _ = solve_deterministic(two_node_case, cone_cfg, solve_opts)
    best = enumerate_designs(two_node_case)
    assert best.plan.lines(0) == plan.lines(0)
    assert len(best.plan.generators(0)) == 1


def test_design_oracle_under_scenarios(two_node_case):
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    scenarios = [Scenario.deterministic(two_node_case), Scenario(*box.upper())]
    best = enumerate_designs(two_node_case, scenarios)
    assert best.plan.generators(0) == [0, 1]
    assert len(best.states) == 2


def test_design_guard():
    doc = create_sample_document([[1.0], [1.0]], years=2)
    with pytest.raises(EnumerationGuardError):
        enumerate_designs(parse_case(doc))


# ----------------------------------------------------------------------------
# Constraint table
# ----------------------------------------------------------------------------

def test_constraint_table_of_an_exact_dispatch(two_node_case):
    plan = plan_from_lists(two_node_case, [(0, 1, 1)], [0])
    p, q = two_node_case.period_loads
    _, state = solve_exact_operation(two_node_case, plan, p, q)
    frame = evaluate_constraints(two_node_case, plan, state, tolerances=Tolerances(abs_tol=1e-5, rel_tol=1e-5,
                                                                                 cone_eps=1e-5))
    assert list(frame.columns) == ["family", "index", "residual", "scale", "hard", "violated"]
    assert {"balance_p", "thermal", "current_voltage", "voltage_drop", "relaxation_gap"} <= set(frame["family"])
    assert not frame["violated"].any(), frame[frame["violated"]]
    assert not frame.loc[frame["family"] == "relaxation_gap", "hard"].any()


def test_constraint_table_flags_an_overload(line_case):
    plan = plan_from_lists(line_case, [(0, 1, 1)], [0])
    scenario = Scenario(p_load=[[0.0], [3.0]], q_load=[[0.0], [0.0]])
    _, state = solve_exact_operation(line_case, plan, scenario.p_load, scenario.q_load, mode="slack")
    frame = evaluate_constraints(line_case, plan, state, scenario)
    violated = set(frame.loc[frame["violated"], "family"])
    assert "thermal" in violated
    assert "balance_p" not in violated


@pytest.mark.parametrize("p_load, expect_ok", [(2.0, True), (3.0, False)])
def test_constraint_table_agrees_with_the_checker(line_case, p_load, expect_ok):
    plan = plan_from_lists(line_case, [(0, 1, 1)], [0])
    scenario = Scenario(p_load=[[0.0], [p_load]], q_load=[[0.0], [0.0]])
    _, state = solve_exact_operation(line_case, plan, scenario.p_load, scenario.q_load, mode="slack")
    tolerances = Tolerances(abs_tol=1e-5, rel_tol=1e-5, cone_eps=1e-5)

    frame = evaluate_constraints(line_case, plan, state, scenario, tolerances)
    report = check_plan(line_case, plan, state, tolerances, scenario.p_load, scenario.q_load)
    assert report.ok is expect_ok
    assert set(frame.loc[frame["violated"], "family"]) == set(report.families())
    if not expect_ok:
        assert report.families() == ["thermal"]
