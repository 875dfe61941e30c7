"""
Shared sample cases for the test suite
"""
import copy
import json
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent
collect_ignore = ["examples"]
sys.path.insert(0, str(ROOT))

from mg_planner.core_model.case import InvestmentPlan, NetworkCase, parse_case  # noqa: E402
from mg_planner.formulation.cones import ConeApproxConfig  # noqa: E402
from mg_planner.solver_gateway import SolveOptions  # noqa: E402


SMALL_ELECTRICAL = {
    "r": 0.1, "x": 0.1,
    "v_min": 0.95, "v_max": 1.05,
    "s_rating": 10.0,
    "p_gen_max": 5.0, "p_gen_min": 0.0,
    "cos_phi_min": 0.8,
    "max_parallel": 2,
    "theta_delta": 0.5,
}

SMALL_COSTS = {"c_cond": 100.0, "c_pole": 50.0, "c_gen": 1000.0, "a": 0.1, "b": 0.2}


def create_sample_document(p_loads, q_loads=None, distances=None, electrical=None, costs=None,
                           years=1, scale_factor=10.0, discount_rate=0.1, growth_rate=0.0,
                           uncertainty=None, name="sample"):
    """
    Case document with one representative day

    Args:
        p_loads: Per-node list of loads over the day's periods
        q_loads: Reactive loads (zeros when omitted)
        distances: Distance matrix; nodes on a 1 km line when omitted
    """
    n = len(p_loads)
    if q_loads is None:
        q_loads = [[0.0] * len(row) for row in p_loads]
    if distances is None:
        distances = [[float(abs(i - j)) for j in range(n)] for i in range(n)]
    doc = {
        "schema": "mg-planner/case/1",
        "name": name,
        "nodes": [{"id": f"n{i}", "p_load": list(p_loads[i]), "q_load": list(q_loads[i])} for i in range(n)],
        "distances": distances,
        "costs": dict(SMALL_COSTS, **(costs or {})),
        "electrical": dict(SMALL_ELECTRICAL, **(electrical or {})),
        "horizon": {"years": years, "periods_per_day": len(p_loads[0])},
        "growth_rate": growth_rate,
        "scale_factor_H": scale_factor,
        "discount_rate": discount_rate,
    }
    if uncertainty is not None:
        doc["uncertainty"] = uncertainty
    return doc


def create_single_node_case(p_load=2.0, p_gen_max=2.0, **kwargs) -> NetworkCase:
    """One node, one period, no reactive load"""
    return parse_case(create_sample_document([[p_load]], electrical={"p_gen_max": p_gen_max}, **kwargs))


def create_two_node_case(**kwargs) -> NetworkCase:
    """Two 2 kW loads 1 km apart; one generator covers them, 1.5x loads need two"""
    return parse_case(create_sample_document([[2.0], [2.0]], q_loads=[[0.5], [0.5]], **kwargs))


def create_line_case(s_rating=2.5, **kwargs) -> NetworkCase:
    """A 2 kW load at node 1, fed from node 0 over one corridor in the fixed-plan tests"""
    doc = create_sample_document([[0.0], [2.0]], electrical={"s_rating": s_rating, "p_gen_max": 10.0},
                                 costs={"c_gen": 100000.0}, **kwargs)
    return parse_case(doc)


def plan_from_lists(case: NetworkCase, lines, generators) -> InvestmentPlan:
    """Single-year plan from [(i, j, count)] and a list of generator nodes"""
    gamma = np.zeros((case.n, case.n, case.horizon_years), dtype=int)
    sigma = np.zeros((case.n, case.horizon_years), dtype=int)
    for i, j, count in lines:
        gamma[i, j, :] = count
    for i in generators:
        sigma[i, :] = 1
    return InvestmentPlan.from_counts(gamma, sigma, case.electrical.max_parallel)


@pytest.fixture
def three_node_document():
    with open(ROOT / "cases" / "three_node.json") as f:
        return json.load(f)


@pytest.fixture
def three_node_case(three_node_document):
    return parse_case(copy.deepcopy(three_node_document))


@pytest.fixture
def single_node_case():
    return create_single_node_case()


@pytest.fixture
def two_node_case():
    return create_two_node_case()


@pytest.fixture
def line_case():
    return create_line_case()


@pytest.fixture
def cone_cfg():
    return ConeApproxConfig(accuracy_eps=1e-3)


@pytest.fixture
def solve_opts():
    return SolveOptions(mip_gap=1e-6, time_limit=120.0)
