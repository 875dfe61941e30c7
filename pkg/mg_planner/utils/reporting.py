"""
Machine-readable artifacts (plan.json, robust.json) and the textual summary
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from dataclasses_json import dataclass_json

from ..core_model.case import InvestmentPlan, MoneyBreakdown, NetworkCase, OperationalState
from ..exceptions import ScenarioFormatError


logger = logging.getLogger(__name__)

PLAN_SCHEMA = "mg-planner/plan/1"
ROBUST_SCHEMA = "mg-planner/robust/1"
FLOAT_DIGITS = 10


def round_floats(obj: Any, digits: int = FLOAT_DIGITS) -> Any:
    """Recursively round floats (and numpy scalars) so identical runs serialise identically"""
    if isinstance(obj, dict):
        return {str(k): round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_floats(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return None
        return round(value, digits) + 0.0
    return obj


def dumps_document(doc: Union[Dict[str, Any], Any]) -> str:
    if hasattr(doc, "to_dict"):
        doc = doc.to_dict()
    return json.dumps(round_floats(doc), indent=2, sort_keys=True) + "\n"


def write_document(path: Union[str, Path], doc: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_document(doc))
    logger.info(f"Wrote {path}")
    return path


# ----------------------------------------------------------------------------
# Documents
# ----------------------------------------------------------------------------

@dataclass_json
@dataclass
class LineEntry:
    year: int
    i: int
    j: int
    count: int


@dataclass_json
@dataclass
class MoneyDocument:
    npv: float
    discounted_capex: float
    discounted_opex: float
    capex_lines: List[float]
    capex_generators: List[float]
    opex: List[float]


@dataclass_json
@dataclass
class DispatchDocument:
    scenario: int
    p_gen: List[List[float]]
    q_gen: List[List[float]]
    nu: List[List[float]]
    p_shed: List[List[float]]
    q_shed: List[List[float]]
    flows: List[Dict[str, Any]]


@dataclass_json
@dataclass
class PlanDocument:
    schema: str
    case_name: str
    n_nodes: int
    horizon_years: int
    max_parallel: int
    lines: List[LineEntry]
    generators: List[List[int]]
    money: MoneyDocument
    objective: float
    gap: float = 0.0
    dispatch: List[DispatchDocument] = field(default_factory=list)
    settings: Dict[str, Any] = field(default_factory=dict)


@dataclass_json
@dataclass
class RobustDocument:
    schema: str
    plan: PlanDocument
    iterations: int
    scenarios_total: int
    scenarios_by_origin: Dict[str, int]
    audit: List[Dict[str, Any]]
    box: Dict[str, Any] = field(default_factory=dict)
    objective_monotone: bool = True


def money_document(money: MoneyBreakdown) -> MoneyDocument:
    return MoneyDocument(npv=float(money.npv), discounted_capex=money.discounted_capex,
                         discounted_opex=money.discounted_opex,
                         capex_lines=[float(v) for v in money.capex_dist],
                         capex_generators=[float(v) for v in money.capex_gen],
                         opex=[float(v) for v in money.opex])


def _dispatch_document(case: NetworkCase, state: OperationalState, scenario: int) -> DispatchDocument:
    flows = []
    for i, j in case.arcs:
        if np.any(state.p_flow[i, j] != 0.0) or np.any(state.q_flow[i, j] != 0.0):
            flows.append({"from": i, "to": j, "p": state.p_flow[i, j].tolist(),
                          "q": state.q_flow[i, j].tolist(), "psi": state.psi[i, j].tolist()})
    return DispatchDocument(scenario=scenario, p_gen=state.p_gen.tolist(), q_gen=state.q_gen.tolist(),
                            nu=state.nu.tolist(), p_shed=state.p_shed.tolist(), q_shed=state.q_shed.tolist(),
                            flows=flows)


def plan_document(case: NetworkCase, plan: InvestmentPlan, money: MoneyBreakdown,
                  states: Sequence[OperationalState] = (), gap: float = 0.0,
                  settings: Optional[Dict[str, Any]] = None) -> PlanDocument:
    """
    Plan, cost breakdown and dispatch as a serialisable document

    Args:
        case: Planning case
        plan: Extracted investment plan
        money: Cost breakdown of the plan
        states: Dispatch per scenario (may be empty)
        gap: Relative MIP gap reported by the backend
        settings: Settings snapshot to embed

    Returns:
        PlanDocument
    """
    lines = [LineEntry(year=y, i=i, j=j, count=c)
             for y in range(case.horizon_years) for i, j, c in plan.lines(y)]
    generators = [plan.generators(y) for y in range(case.horizon_years)]
    return PlanDocument(schema=PLAN_SCHEMA, case_name=case.name, n_nodes=case.n,
                        horizon_years=case.horizon_years, max_parallel=case.electrical.max_parallel,
                        lines=lines, generators=generators, money=money_document(money),
                        objective=float(money.npv), gap=float(gap),
                        dispatch=[_dispatch_document(case, s, k) for k, s in enumerate(states)],
                        settings=dict(settings or {}))


def plan_from_document(doc: Dict[str, Any], case: NetworkCase) -> InvestmentPlan:
    """Rebuild an InvestmentPlan from a plan.json (or robust.json) document"""
    if isinstance(doc, dict) and doc.get("schema") == ROBUST_SCHEMA:
        doc = doc.get("plan", {})
    try:
        parsed = PlanDocument.from_dict(doc)
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ScenarioFormatError(f"plan document: {str(e)}") from e
    if parsed.schema != PLAN_SCHEMA:
        raise ScenarioFormatError(f"plan document: unsupported schema {parsed.schema!r}")
    if parsed.n_nodes != case.n or parsed.horizon_years != case.horizon_years:
        raise ScenarioFormatError(f"plan document: {parsed.n_nodes} nodes x {parsed.horizon_years} years "
                                  f"does not match case {case.n} x {case.horizon_years}")
    if len(parsed.generators) != case.horizon_years:
        raise ScenarioFormatError("plan document: generators must list one entry per year")

    n, Y, xi = case.n, case.horizon_years, case.electrical.max_parallel
    gamma = np.zeros((n, n, Y), dtype=int)
    sigma = np.zeros((n, Y), dtype=int)
    for line in parsed.lines:
        if not (0 <= line.i < n and 0 <= line.j < n and 0 <= line.year < Y) or line.i == line.j:
            raise ScenarioFormatError(f"plan document: invalid line entry {line}")
        gamma[line.i, line.j, line.year] = line.count
    for y, nodes in enumerate(parsed.generators):
        for i in nodes:
            if not 0 <= i < n:
                raise ScenarioFormatError(f"plan document: generator node {i} out of range")
            sigma[i, y] = 1
    plan = InvestmentPlan.from_counts(gamma, sigma, xi)
    problems = plan.invariant_violations(xi)
    if problems:
        raise ScenarioFormatError(f"plan document: {'; '.join(problems)}")
    return plan


# ----------------------------------------------------------------------------
# Summary table
# ----------------------------------------------------------------------------

def summary_frame(rows: Dict[str, Dict[str, Any]]) -> pd.DataFrame:
    """One column per run (deterministic, robust, ...), one row per reported quantity"""
    order = ["OPEX", "CAPEX", "Total cost", "Total scenarios", "Iterations", "Computation time (s)"]
    frame = pd.DataFrame(rows)
    return frame.reindex([r for r in order if r in frame.index])


def summary_row(money: MoneyBreakdown, scenarios: int, iterations: int,
                wall_time: Optional[float] = None) -> Dict[str, Any]:
    row = {
        "OPEX": round(money.discounted_opex, 2),
        "CAPEX": round(money.discounted_capex, 2),
        "Total cost": round(money.npv, 2),
        "Total scenarios": int(scenarios),
        "Iterations": int(iterations),
    }
    if wall_time is not None:
        row["Computation time (s)"] = round(wall_time, 2)
    return row


def write_summary(path: Union[str, Path], rows: Dict[str, Dict[str, Any]], title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = summary_frame(rows).to_string()
    if title:
        text = f"{title}\n{'=' * len(title)}\n{text}"
    path.write_text(text + "\n")
    logger.info(f"Wrote {path}")
    return path
