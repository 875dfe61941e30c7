"""
Tests for the uncertainty box, the adversarial/corrective subproblems and the robust loop
"""
import dataclasses
import io
import math

import numpy as np
import pytest

from conftest import create_sample_document, plan_from_lists
from mg_planner.config.settings import GenerationAdversary, RobustSettings
from mg_planner.core_model import parse_case
from mg_planner.exceptions import (
    ConfigurationError, EnumerationGuardError, FormulationError, IterationLimitError, ScenarioFormatError
)
from mg_planner.formulation import build_deterministic
from mg_planner.robust_engine import (
    Scenario, ScenarioOrigin, TargetMask, UncertaintyBox, adversarial_generation, adversarial_thermal,
    adversary_sweep, corrective_generation, corrective_thermal, dump_scenarios, operate, restore_scenarios,
    robust_plan, run_sweep, scenario_generator
)
from mg_planner.solver_gateway import extract, polish, solve


# ----------------------------------------------------------------------------
# Box, scenarios, masks
# ----------------------------------------------------------------------------

def test_box_from_factors(two_node_case):
    box = UncertaintyBox.from_factors(two_node_case, 0.75, 1.25)
    assert box.shape == (2, 1)
    assert box.p_lo.tolist() == [[1.5], [1.5]]
    assert box.q_hi.tolist() == [[0.625], [0.625]]
    assert box.contains(*two_node_case.period_loads)
    assert len(box.uncertain_coordinates()) == 4
    with pytest.raises(ConfigurationError):
        UncertaintyBox.from_factors(two_node_case, 1.1, 1.5)


def test_degenerate_coordinates_are_not_uncertain(line_case):
    box = UncertaintyBox.from_factors(line_case, 0.5, 1.5)
    # only node 1 carries active load; reactive loads are zero
    assert box.uncertain_coordinates() == [("p", 1, 0)]
    p, q = box.vertex([("p", 1, 0)], [False])
    assert p.tolist() == [[0.0], [1.0]]
    assert q.tolist() == [[0.0], [0.0]]


def test_box_rejects_inverted_bounds():
    with pytest.raises(ScenarioFormatError):
        UncertaintyBox(p_lo=[[2.0]], p_hi=[[1.0]], q_lo=[[0.0]], q_hi=[[0.0]])


def test_scenario_fingerprint_ignores_tiny_noise(two_node_case):
    base = Scenario.deterministic(two_node_case)
    noisy = Scenario(p_load=base.p_load + 1e-12, q_load=base.q_load)
    shifted = Scenario(p_load=base.p_load + 1e-6, q_load=base.q_load)
    assert noisy.fingerprint == base.fingerprint
    assert shifted.fingerprint != base.fingerprint
    with pytest.raises(ValueError):
        base.p_load[0, 0] = 9.0


def test_target_mask_validation():
    mask = TargetMask.generation([(1, 0), (0, 2)])
    assert mask.periods == [0, 2]
    assert mask.sorted_entries() == [(0, 2), (1, 0)]
    with pytest.raises(ValueError):
        TargetMask.generation([])
    with pytest.raises(ValueError):
        TargetMask.thermal([(0, 1)])


def test_scenario_dump_restores(two_node_case):
    box = UncertaintyBox.from_factors(two_node_case, 0.5, 1.5)
    vertex = Scenario(*box.upper(), origin=ScenarioOrigin.THERMAL_ADVERSARY, residual=math.inf)
    scenarios = [Scenario.deterministic(two_node_case), vertex.with_residual(0.25), vertex]

    stream = io.StringIO()
    dump_scenarios(scenarios, stream)
    stream.seek(0)
    restored = restore_scenarios(stream, two_node_case)
    assert [s.fingerprint for s in restored] == [s.fingerprint for s in scenarios]
    assert [s.origin for s in restored] == [s.origin for s in scenarios]
    assert restored[1].residual == 0.25
    assert math.isinf(restored[2].residual)


def test_restore_rejects_foreign_records(three_node_case, two_node_case):
    stream = io.StringIO()
    dump_scenarios([Scenario.deterministic(three_node_case)], stream)
    stream.seek(0)
    with pytest.raises(ScenarioFormatError):
        restore_scenarios(stream, two_node_case)
    with pytest.raises(ScenarioFormatError):
        restore_scenarios(io.StringIO('{"schema": "other/1"}\n'))


# ----------------------------------------------------------------------------
# Subproblems
# ----------------------------------------------------------------------------

def test_generation_adversary_on_a_single_node(single_node_case, cone_cfg):
    plan = plan_from_lists(single_node_case, [], [0])
    box = UncertaintyBox.from_factors(single_node_case, 0.75, 1.25)
    scenario, objective = adversarial_generation(single_node_case, plan, box, TargetMask.generation([(0, 0)]),
                                                 cone_cfg)
    # 2.5 kW against a 2 kW generator
    assert objective == pytest.approx(0.5, abs=1e-6)
    assert scenario.p_load.tolist() == [[2.5]]
    assert scenario.origin is ScenarioOrigin.GENERATION_ADVERSARY
    assert box.is_vertex(scenario)

    assert corrective_generation(single_node_case, plan, scenario, cone_cfg) == pytest.approx(0.5, abs=1e-6)
    deterministic = Scenario.deterministic(single_node_case)
    assert corrective_generation(single_node_case, plan, deterministic, cone_cfg) == pytest.approx(0.0, abs=1e-7)


def test_generation_adversary_without_generators(single_node_case, cone_cfg):
    plan = plan_from_lists(single_node_case, [], [])
    box = UncertaintyBox.from_factors(single_node_case, 0.75, 1.25)
    _, objective = adversarial_generation(single_node_case, plan, box, TargetMask.generation([(0, 0)]), cone_cfg)
    assert objective == pytest.approx(2.5, abs=1e-6)


def test_joint_reading_sheds_the_whole_masked_load(single_node_case, cone_cfg):
    plan = plan_from_lists(single_node_case, [], [0])
    box = UncertaintyBox.from_factors(single_node_case, 0.75, 1.25)
    joint = RobustSettings(generation_adversary=GenerationAdversary.JOINT)
    scenario, objective = adversarial_generation(single_node_case, plan, box, TargetMask.generation([(0, 0)]),
                                                 cone_cfg, robust=joint)
    # the dispatch is free to idle the generator, so all 2.5 kW can be shed
    assert objective == pytest.approx(2.5, abs=1e-6)
    assert scenario.p_load.tolist() == [[2.5]]
    assert box.is_vertex(scenario)
    residual = corrective_generation(single_node_case, plan, scenario, cone_cfg)
    assert residual == pytest.approx(0.5, abs=1e-6)
    assert residual <= objective


def create_redispatch_case():
    """Node 0 peaks above its own 5 kW generator; node 2's generator covers the rest through node 1"""
    return parse_case(create_sample_document([[4.0], [1.0], [1.0]]))


def test_corrective_filters_a_local_deficit(cone_cfg):
    case = create_redispatch_case()
    plan = plan_from_lists(case, [(0, 1, 1), (1, 2, 1)], [0, 2])
    box = UncertaintyBox.from_factors(case, 1.0, 1.5)
    joint = RobustSettings(generation_adversary=GenerationAdversary.JOINT)

    scenario, objective = adversarial_generation(case, plan, box, TargetMask.generation([(0, 0)]), cone_cfg,
                                                 robust=joint)
    assert objective == pytest.approx(6.0, abs=1e-6)
    assert scenario.p_load[0, 0] == pytest.approx(6.0)
    assert corrective_generation(case, plan, scenario, cone_cfg) == pytest.approx(0.0, abs=1e-6)

    report = run_sweep(case, plan, box, cone_cfg, robust=joint)
    assert len(report.generation_objectives) == 3
    assert min(report.generation_objectives) > joint.tol
    assert report.problematic == []

    bilevel = run_sweep(case, plan, box, cone_cfg)
    assert bilevel.generation_objectives == pytest.approx([0.0] * 3, abs=1e-6)
    assert bilevel.problematic == []


def test_enumeration_cap_is_a_hard_error(two_node_case, cone_cfg):
    plan = plan_from_lists(two_node_case, [(0, 1, 1)], [0])
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    capped = RobustSettings(max_enumerated_coordinates=1)
    with pytest.raises(EnumerationGuardError):
        adversarial_generation(two_node_case, plan, box, TargetMask.generation([(1, 0)]), cone_cfg, robust=capped)
    with pytest.raises(EnumerationGuardError):
        adversarial_thermal(two_node_case, plan, box, TargetMask.thermal([(0, 1, 0)]), cone_cfg, robust=capped)

    # node 1 alone carries its two coordinates; node 0 stays at its upper bound
    scenario, objective = adversarial_generation(two_node_case, plan, box, TargetMask.generation([(1, 0)]),
                                                 cone_cfg, robust=RobustSettings(max_enumerated_coordinates=2))
    assert objective == pytest.approx(1.0, abs=2e-3)
    assert scenario.p_load.tolist() == box.p_hi.tolist()


def test_thermal_adversary_finds_the_overload(line_case, cone_cfg):
    plan = plan_from_lists(line_case, [(0, 1, 1)], [0])
    box = UncertaintyBox.from_factors(line_case, 0.75, 1.5)
    mask = TargetMask.thermal([(0, 1, 0)])
    scenario, objective = adversarial_thermal(line_case, plan, box, mask, cone_cfg)
    # 3 kW through a 2.5 kVA corridor: at least 9 - 6.25
    assert objective >= 2.75 - 1e-3
    assert scenario.p_load[1, 0] == pytest.approx(3.0)
    assert box.is_vertex(scenario)

    residual = corrective_thermal(line_case, plan, scenario, cone_cfg)
    # both arc directions carry about 9 - 6.25; the outer cone shaves a little off
    assert residual == pytest.approx(5.5, abs=0.15)


def test_thermal_adversary_is_negative_without_overload(line_case, cone_cfg):
    plan = plan_from_lists(line_case, [(0, 1, 1)], [0])
    _, objective = adversarial_thermal(line_case, plan, UncertaintyBox.point(line_case),
                                       TargetMask.thermal([(0, 1, 0)]), cone_cfg)
    assert objective < 0.0
    scenario = Scenario.deterministic(line_case)
    assert corrective_thermal(line_case, plan, scenario, cone_cfg) == pytest.approx(0.0, abs=1e-6)


def test_thermal_targets_must_be_built_corridors(three_node_case, cone_cfg):
    plan = plan_from_lists(three_node_case, [(0, 1, 1), (0, 2, 1)], [0])
    box = UncertaintyBox.point(three_node_case)
    for entry in [(1, 0, 0), (1, 2, 0)]:
        with pytest.raises(FormulationError):
            adversarial_thermal(three_node_case, plan, box, TargetMask.thermal([entry]), cone_cfg)


def test_thermal_direction_search_matches_a_dense_fan(cone_cfg):
    # node 2 draws at 22.5 degrees, halfway between two directions of a four-way fan
    q = 6.0 * math.tan(math.pi / 8.0)
    doc = create_sample_document([[0.0], [0.0], [6.0]], q_loads=[[0.0], [0.0], [q]],
                                 distances=[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
                                 electrical={"s_rating": 3.0})
    case = parse_case(doc)
    plan = plan_from_lists(case, [(0, 1, 1), (0, 2, 1), (1, 2, 1)], [0, 1])
    box = UncertaintyBox.from_factors(case, 1.0, 1.2)
    mask = TargetMask.thermal([(0, 2, 0)])

    _, coarse = adversarial_thermal(case, plan, box, mask, cone_cfg, robust=RobustSettings(thermal_directions=4))
    _, dense = adversarial_thermal(case, plan, box, mask, cone_cfg, robust=RobustSettings(thermal_directions=64))
    assert coarse == pytest.approx(dense, rel=1e-5, abs=1e-6)
    assert coarse > 0.0


def test_operate_reports_shedding(single_node_case, cone_cfg):
    plan = plan_from_lists(single_node_case, [], [0])
    scenario = Scenario(p_load=[[3.0]], q_load=[[0.0]])
    shed, state = operate(single_node_case, plan, scenario, cone_cfg)
    assert shed == pytest.approx(1.0, abs=1e-6)
    assert state.p_gen[0, 0] == pytest.approx(2.0, abs=1e-6)


# ----------------------------------------------------------------------------
# Sweep and robust loop
# ----------------------------------------------------------------------------

def test_sweep_is_independent_of_worker_count(two_node_case, cone_cfg):
    plan = plan_from_lists(two_node_case, [(0, 1, 1)], [0])
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    serial = run_sweep(two_node_case, plan, box, cone_cfg, robust=RobustSettings(workers=1))
    threaded = run_sweep(two_node_case, plan, box, cone_cfg, robust=RobustSettings(workers=3))
    assert serial.problematic
    assert [s.fingerprint for s in serial.problematic] == [s.fingerprint for s in threaded.problematic]
    assert serial.generation_objectives == pytest.approx(threaded.generation_objectives)
    assert len(serial.generation_objectives) == 2 and len(serial.thermal_objectives) == 1


def test_robust_plan_adds_a_generator(two_node_case, cone_cfg, solve_opts):
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    result = robust_plan(two_node_case, box, cone_cfg, solve_opts)

    deterministic = build_deterministic(two_node_case, cone_cfg)
    _, _, det_money = extract(deterministic, polish(deterministic, solve(deterministic.instance, solve_opts)))

    assert 2 <= result.iterations <= 3
    assert len(result.audit) == result.iterations
    assert result.plan.generators(0) == [0, 1]
    assert result.plan.lines(0) == [(0, 1, 1)]
    assert result.objective > det_money.npv
    assert result.audit[0].added_generation >= 1
    assert result.audit[-1].added_generation == 0 and result.audit[-1].added_thermal == 0
    objectives = [a.main_objective for a in result.audit]
    assert all(b >= a - 1e-6 * (1.0 + abs(a)) for a, b in zip(objectives, objectives[1:]))
    assert result.objective_monotone
    assert all(box.contains(s.p_load, s.q_load) for s in result.scenarios)
    assert not run_sweep(two_node_case, result.plan, box, cone_cfg, solve_opts).problematic


def test_point_box_reproduces_the_deterministic_plan(two_node_case, cone_cfg, solve_opts):
    result = robust_plan(two_node_case, UncertaintyBox.point(two_node_case), cone_cfg, solve_opts)
    deterministic = build_deterministic(two_node_case, cone_cfg)
    _, _, det_money = extract(deterministic, polish(deterministic, solve(deterministic.instance, solve_opts)))
    assert result.iterations == 1
    assert len(result.scenarios) == 1
    assert result.objective == pytest.approx(det_money.npv, rel=1e-6)


def test_iteration_cap_carries_the_audit(two_node_case, cone_cfg, solve_opts):
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    with pytest.raises(IterationLimitError) as info:
        robust_plan(two_node_case, box, cone_cfg, solve_opts, RobustSettings(max_iterations=1))
    audit = info.value.audit
    assert len(audit) == 1
    assert audit[0].iteration == 1
    assert audit[0].scenarios_total == 1


def test_restored_scenarios_seed_the_loop(two_node_case, cone_cfg, solve_opts):
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    upper = Scenario(*box.upper(), origin=ScenarioOrigin.GENERATION_ADVERSARY)
    result = robust_plan(two_node_case, box, cone_cfg, solve_opts, initial=[upper])
    assert result.iterations == 1
    assert np.array_equal(result.plan.sigma[:, 0], [1, 1])


def test_adversary_sweep_lists_the_problematic_vertices(two_node_case, cone_cfg):
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    single = plan_from_lists(two_node_case, [(0, 1, 1)], [0])
    problematic = adversary_sweep(two_node_case, single, box, cone_cfg)
    assert problematic
    assert all(s.origin is ScenarioOrigin.GENERATION_ADVERSARY and s.residual > 0 for s in problematic)
    assert any(s.p_load.tolist() == box.p_hi.tolist() for s in problematic)

    both = plan_from_lists(two_node_case, [(0, 1, 1)], [0, 1])
    assert adversary_sweep(two_node_case, both, box, cone_cfg) == []


def test_objective_decrease_is_recorded(two_node_case, cone_cfg, solve_opts, monkeypatch):
    seen = []
    real_extract = scenario_generator.extract

    def halve_second(model, solution, tol):
        plan, states, money = real_extract(model, solution, tol)
        seen.append(money.npv)
        if len(seen) == 2:
            money = dataclasses.replace(money, npv=seen[0] / 2.0)
        return plan, states, money

    monkeypatch.setattr(scenario_generator, "extract", halve_second)
    box = UncertaintyBox.from_factors(two_node_case, 1.0, 1.5)
    result = robust_plan(two_node_case, box, cone_cfg, solve_opts)
    assert result.audit[0].objective_decrease == 0.0
    assert result.audit[1].objective_decrease == pytest.approx(seen[0] / 2.0)
    assert not result.objective_monotone
