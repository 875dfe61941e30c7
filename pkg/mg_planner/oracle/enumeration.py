"""
Brute-force reference answers for small instances

Box vertices and investment designs are enumerated exhaustively, and every
fixed-plan operating problem is solved as an exact second-order cone program
with cvxpy. Nothing here touches the polyhedral cone approximation or the MILP
model, so the results are an independent check on both.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..core_model.case import InvestmentPlan, MoneyBreakdown, NetworkCase, OperationalState
from ..core_model.economics import npv
from ..exceptions import EnumerationGuardError
from ..robust_engine.uncertainty import Scenario, ScenarioOrigin, TargetMask, UncertaintyBox


logger = logging.getLogger(__name__)

MAX_VERTEX_COORDINATES = 20
MAX_DESIGN_NODES = 4
MAX_DESIGN_PARALLEL = 2

FUEL = "fuel"
SHED = "shed"
SLACK = "slack"

_SOLVED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


def solve_exact_operation(case: NetworkCase, plan: InvestmentPlan, p_load: np.ndarray, q_load: np.ndarray,
                          periods: Optional[Sequence[int]] = None,
                          mode: str = FUEL) -> Tuple[float, Optional[OperationalState]]:
    """
    Fixed-plan operation with exact cones

    Args:
        case: Planning case
        plan: Investment plan
        p_load, q_load: Loads (n, n_periods)
        periods: Periods to operate; all when omitted
        mode: FUEL (minimise fuel, no shedding), SHED (minimise total shedding)
              or SLACK (minimise total squared rating excess)

    Returns:
        (optimal value, dispatch) or (math.inf, None) when infeasible
    """
    el = case.electrical
    n = case.n
    periods = list(range(case.n_periods)) if periods is None else list(periods)
    r, x = el.r_model, el.x_model
    tan_phi, tan_th = el.tan_phi, el.tan_theta
    v2_lo, v2_hi = el.v_min ** 2, el.v_max ** 2
    df, weight = case.discount_factors, case.period_weight

    constraints = []
    objective = 0.0
    handles = []
    for t in periods:
        y = int(case.period_year[t])
        sigma = plan.sigma[:, y].astype(float)
        pg, qg, nu = cp.Variable(n), cp.Variable(n), cp.Variable(n)
        constraints += [nu >= v2_lo, nu <= v2_hi,
                        pg >= el.p_gen_min * sigma, pg <= el.p_gen_max * sigma,
                        qg <= tan_phi * pg, qg >= -tan_phi * pg]
        if mode == SHED:
            ps, qs = cp.Variable(n, nonneg=True), cp.Variable(n, nonneg=True)
            objective = objective + cp.sum(ps) + cp.sum(qs)
        else:
            ps, qs = np.zeros(n), np.zeros(n)
        if mode == FUEL:
            objective = objective + df[y] * weight[t] * case.cost.b * cp.sum(pg)

        flows, psis = {}, {}
        for i, j in case.edges:
            g = int(plan.gamma[i, j, y])
            if g == 0:
                continue
            dist = float(case.distances[i, j])
            res, rea = r * dist / g, x * dist / g
            psi = cp.Variable(nonneg=True)
            psis[(i, j)] = psi
            for a, b in ((i, j), (j, i)):
                flows[(a, b)] = (cp.Variable(), cp.Variable())
            (p_ij, q_ij), (p_ji, q_ji) = flows[(i, j)], flows[(j, i)]
            constraints += [p_ij + p_ji == res * psi, q_ij + q_ji == rea * psi]

            rating = g * el.s_rating
            for a, b in ((i, j), (j, i)):
                p, q = flows[(a, b)]
                constraints.append(cp.SOC(psi + nu[a], cp.hstack([2 * p, 2 * q, psi - nu[a]])))
                constraints.append(nu[b] - nu[a] + 2 * (res * p + rea * q) - (res ** 2 + rea ** 2) * psi == 0)
                if mode == SLACK:
                    excess = cp.Variable(nonneg=True)
                    objective = objective + excess
                    constraints.append(cp.SOC(rating ** 2 + excess + 1.0,
                                              cp.hstack([2 * p, 2 * q, rating ** 2 + excess - 1.0])))
                else:
                    constraints.append(cp.SOC(rating, cp.hstack([p, q])))
                # angle limits use the single-line impedance
                R, X = res * g, rea * g
                constraints.append(R * (q + tan_th * p) + X * (tan_th * q - p) <= tan_th * g * nu[a])
                constraints.append(X * (p + tan_th * q) + R * (tan_th * p - q) <= tan_th * g * nu[a])

        for i in range(n):
            out_p = sum(flows[(i, j)][0] for j in range(n) if (i, j) in flows)
            out_q = sum(flows[(i, j)][1] for j in range(n) if (i, j) in flows)
            constraints.append(pg[i] - p_load[i, t] + ps[i] == out_p)
            constraints.append(qg[i] - q_load[i, t] + qs[i] == out_q)
        handles.append((t, pg, qg, nu, ps, qs, flows, psis))

    problem = cp.Problem(cp.Minimize(objective), constraints)
    try:
        problem.solve()
    except cp.error.SolverError as e:
        logger.warning(f"Exact operation solve failed: {str(e)}")
        return math.inf, None
    if problem.status not in _SOLVED:
        logger.debug(f"Exact operation ({mode}) ended {problem.status}")
        return math.inf, None

    state = OperationalState.zeros(n, case.n_periods, v_nominal=el.v_min)
    for t, pg, qg, nu, ps, qs, flows, psis in handles:
        state.p_gen[:, t] = pg.value
        state.q_gen[:, t] = qg.value
        state.nu[:, t] = nu.value
        if mode == SHED:
            state.p_shed[:, t] = ps.value
            state.q_shed[:, t] = qs.value
        for (a, b), (p, q) in flows.items():
            state.p_flow[a, b, t] = p.value
            state.q_flow[a, b, t] = q.value
        for (i, j), psi in psis.items():
            state.psi[i, j, t] = state.psi[j, i, t] = psi.value
    value = float(problem.value)
    return (value if mode == FUEL else max(value, 0.0)), state


# ----------------------------------------------------------------------------
# Vertex enumeration
# ----------------------------------------------------------------------------

def vertex_residuals(case: NetworkCase, plan: InvestmentPlan, box: UncertaintyBox, family: str,
                     mask: Optional[TargetMask] = None, workers: int = 1) -> List[Tuple[Scenario, float]]:
    """
    Corrective residual at every vertex of the box

    Coordinates outside the masked periods stay at their upper bound and only the
    masked periods are operated.

    Raises:
        EnumerationGuardError: more than 20 uncertain coordinates
    """
    if family not in ("generation", "thermal"):
        raise ValueError(f"Unknown family {family!r}")
    periods = list(range(case.n_periods)) if mask is None else mask.periods
    coords = box.uncertain_coordinates(periods=periods)
    if len(coords) > MAX_VERTEX_COORDINATES:
        raise EnumerationGuardError(f"{len(coords)} uncertain coordinates exceed the vertex guard "
                                    f"of {MAX_VERTEX_COORDINATES}")
    mode = SHED if family == "generation" else SLACK
    origin = (ScenarioOrigin.GENERATION_ADVERSARY if family == "generation"
              else ScenarioOrigin.THERMAL_ADVERSARY)
    assignments = list(itertools.product((True, False), repeat=len(coords)))

    def evaluate(high) -> Tuple[Scenario, float]:
        p, q = box.vertex(coords, high)
        value, _ = solve_exact_operation(case, plan, p, q, periods, mode)
        return Scenario(p_load=p, q_load=q, origin=origin, residual=value), value

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, assignments))
    else:
        results = [evaluate(high) for high in assignments]
    logger.debug(f"Vertex oracle ({family}): {len(results)} vertices over {len(coords)} coordinates")
    return results


def enumerate_vertex_adversary(case: NetworkCase, plan: InvestmentPlan, box: UncertaintyBox, family: str,
                               mask: Optional[TargetMask] = None, workers: int = 1) -> Tuple[Scenario, float]:
    """Worst box vertex by corrective residual (first one wins ties)"""
    results = vertex_residuals(case, plan, box, family, mask, workers)
    best_scenario, best = results[0]
    for scenario, value in results[1:]:
        if value > best:
            best_scenario, best = scenario, value
    return best_scenario, best


# ----------------------------------------------------------------------------
# Design enumeration
# ----------------------------------------------------------------------------

@dataclass
class DesignOptimum:
    plan: InvestmentPlan
    objective: float
    money: MoneyBreakdown
    states: List[OperationalState] = field(default_factory=list)
    evaluated: int = 0


def _connected(case: NetworkCase, gamma: np.ndarray) -> bool:
    if case.n == 1:
        return True
    count, _ = connected_components(csr_matrix((gamma[:, :, 0] > 0).astype(float)), directed=False)
    return count == 1


def enumerate_designs(case: NetworkCase,
                      scenarios: Optional[Sequence[Scenario]] = None) -> Optional[DesignOptimum]:
    """
    Cheapest plan over every line-count and generator choice

    Each connected design with enough generation capacity is operated against
    every scenario (equiprobable; the deterministic loads when none are given)
    and priced with the NPV accounting.

    Raises:
        EnumerationGuardError: more than 4 nodes, more than one year or more than
            2 parallel lines
    """
    el = case.electrical
    if case.n > MAX_DESIGN_NODES or case.horizon_years != 1 or el.max_parallel > MAX_DESIGN_PARALLEL:
        raise EnumerationGuardError(f"Design enumeration needs n <= {MAX_DESIGN_NODES}, one year and at most "
                                    f"{MAX_DESIGN_PARALLEL} parallel lines (got n={case.n}, "
                                    f"Y={case.horizon_years}, xi={el.max_parallel})")
    if scenarios is None:
        scenarios = [Scenario.deterministic(case)]
    n, edges = case.n, case.edges
    peak = max(float(s.p_load.sum(axis=0).max()) for s in scenarios)

    candidates = []
    for counts in itertools.product(range(el.max_parallel + 1), repeat=len(edges)):
        gamma = np.zeros((n, n, 1), dtype=int)
        for (i, j), c in zip(edges, counts):
            gamma[i, j, 0] = c
        if not _connected(case, np.maximum(gamma, np.transpose(gamma, (1, 0, 2)))):
            continue
        for sigma in itertools.product((0, 1), repeat=n):
            if sum(sigma) * el.p_gen_max < peak:
                continue
            plan = InvestmentPlan.from_counts(gamma, np.array(sigma, dtype=int).reshape(n, 1), el.max_parallel)
            zero = [OperationalState.zeros(n, case.n_periods, el.v_min)]
            candidates.append((npv(case, plan, zero).npv, plan))
    candidates.sort(key=lambda item: item[0])

    def operate(plan: InvestmentPlan) -> Optional[List[OperationalState]]:
        states = []
        for s in scenarios:
            value, state = solve_exact_operation(case, plan, s.p_load, s.q_load, mode=FUEL)
            if state is None:
                return None
            states.append(state)
        return states

    best: Optional[DesignOptimum] = None
    evaluated = 0
    for fixed_cost, plan in candidates:
        if best is not None and fixed_cost >= best.objective:
            break
        states = operate(plan)
        evaluated += 1
        if states is None:
            continue
        money = npv(case, plan, states)
        if best is None or money.npv < best.objective:
            best = DesignOptimum(plan=plan, objective=money.npv, money=money, states=states)

    if best is None:
        logger.warning(f"No feasible design among {len(candidates)} candidates")
        return None
    best.evaluated = evaluated
    logger.info(f"Design oracle: {len(candidates)} candidates, {evaluated} operated, best NPV {best.objective:.6g}")
    return best
