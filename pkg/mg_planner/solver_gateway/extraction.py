"""
Typed solution extraction and investment polishing
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from ..core_model.case import InvestmentPlan, MoneyBreakdown, OperationalState
from ..core_model.economics import npv
from ..exceptions import ExtractionError
from ..formulation.planning_model import ABSENT, OperationalVars, PlanningModel
from .gateway import MilpSolution, SolveOptions, SolveStatus, solve


logger = logging.getLogger(__name__)


def _integral(values: np.ndarray, ids: np.ndarray, tol: float, what: str) -> np.ndarray:
    raw = values[ids]
    rounded = np.round(raw)
    worst = np.abs(raw - rounded)
    if worst.size and worst.max() > tol:
        k = int(np.argmax(worst))
        raise ExtractionError(f"{what} value {raw.reshape(-1)[k]!r} is not integral within {tol:g}")
    return rounded.astype(int)


def _take(values: np.ndarray, ids: np.ndarray) -> np.ndarray:
    out = np.zeros(ids.shape)
    mask = ids != ABSENT
    out[mask] = values[ids[mask]]
    return out


def extract_plan(model: PlanningModel, values: np.ndarray, tol: float = 1e-6) -> InvestmentPlan:
    """Rounded, validated investment plan from a main-problem point"""
    if model.investments is None:
        if model.fixed_plan is None:
            raise ExtractionError("Model carries no investment information")
        return model.fixed_plan

    case, inv = model.case, model.investments
    n, Y, xi = case.n, case.horizon_years, case.electrical.max_parallel
    gamma_e = _integral(values, inv.gamma, tol, "gamma")
    omega_e = _integral(values, inv.omega, tol, "omega")
    loi_e = _integral(values, inv.loi, tol, "loi")
    sigma = _integral(values, inv.sigma, tol, "sigma")

    gamma = np.zeros((n, n, Y), dtype=int)
    omega = np.zeros((n, n, Y), dtype=int)
    loi = np.zeros((n, n, xi, Y), dtype=int)
    for e, (i, j) in enumerate(case.edges):
        gamma[i, j] = gamma[j, i] = gamma_e[e]
        omega[i, j] = omega[j, i] = omega_e[e]
        loi[i, j] = loi[j, i] = loi_e[e]
    for arr in (gamma, omega, loi, sigma):
        arr.setflags(write=False)

    plan = InvestmentPlan(gamma=gamma, omega=omega, loi=loi, sigma=sigma)
    problems = plan.invariant_violations(xi)
    if problems:
        raise ExtractionError(f"Extracted plan violates invariants: {'; '.join(problems)}")
    return plan


def extract_state(model: PlanningModel, values: np.ndarray, ops: OperationalVars) -> OperationalState:
    """Dispatch of one operational block, laid out over the full horizon"""
    case = model.case
    n, P = case.n, case.n_periods
    state = OperationalState.zeros(n, P, v_nominal=case.electrical.v_min)
    cols = list(ops.periods)

    state.p_gen[:, cols] = _take(values, ops.pg)
    state.q_gen[:, cols] = _take(values, ops.qg)
    state.nu[:, cols] = _take(values, ops.nu)
    if ops.p_shed is not None:
        state.p_shed[:, cols] = _take(values, ops.p_shed)
        state.q_shed[:, cols] = _take(values, ops.q_shed)

    p_arcs, q_arcs = _take(values, ops.p), _take(values, ops.q)
    for k, (i, j) in enumerate(case.arcs):
        state.p_flow[i, j, cols] = p_arcs[k]
        state.q_flow[i, j, cols] = q_arcs[k]
    psi_edges = _take(values, ops.psi)
    for e, (i, j) in enumerate(case.edges):
        state.psi[i, j, cols] = psi_edges[e]
        state.psi[j, i, cols] = psi_edges[e]
    return state


def extract(model: PlanningModel, solution: MilpSolution,
            tol: float = 1e-6) -> Tuple[InvestmentPlan, List[OperationalState], MoneyBreakdown]:
    """
    Typed plan, per-scenario dispatch and cost breakdown of a solved model

    Args:
        model: Planning model the solution belongs to
        solution: Solve result with status optimal or feasible
        tol: Integrality tolerance

    Returns:
        (InvestmentPlan, [OperationalState per scenario], MoneyBreakdown)
    """
    if not solution.has_point:
        raise ExtractionError(f"Cannot extract from a {solution.status.value} solution of {model.instance.name}")

    values = solution.values
    plan = extract_plan(model, values, tol)
    states = [extract_state(model, values, ops) for ops in model.operations]
    money = npv(model.case, plan, states)

    if model.investments is not None:
        if abs(money.npv - solution.objective) > 1e-6 * (1.0 + abs(solution.objective)):
            raise ExtractionError(f"Recomputed NPV {money.npv!r} differs from solver objective "
                                  f"{solution.objective!r}")
    return plan, states, money


def polish(model: PlanningModel, solution: MilpSolution, opts: Optional[SolveOptions] = None) -> MilpSolution:
    """
    Fix the rounded investments and re-solve the operational LP

    The returned point is exactly consistent with an integral plan; when the LP
    cannot be solved the original solution is kept.
    """
    if model.investments is None or not solution.has_point:
        return solution
    opts = opts or SolveOptions()
    ids = model.investment_ids()
    rounded = {idx: float(round(solution.values[idx])) for idx in ids}
    worst = max((abs(solution.values[idx] - v) for idx, v in rounded.items()), default=0.0)
    if worst > opts.integrality_tol:
        raise ExtractionError(f"Investment value off integrality by {worst:.3g} before polishing")

    fixed = model.instance.fixed(rounded, name=f"{model.instance.name}_polish")
    polished = solve(fixed, opts)
    if polished.status is not SolveStatus.OPTIMAL:
        logger.warning(f"Polishing LP for {model.instance.name} ended {polished.status.value}; "
                       f"keeping the MILP point")
        return solution

    polished.gap = solution.gap
    polished.solve_time += solution.solve_time
    return polished
