"""
Adversarial and corrective subproblems for a fixed investment plan

Once investments are fixed the operating periods decouple, so every
subproblem is assembled from one-period LPs. The LP of a period is built once
per plan and reused for every load assignment by rewriting the right-hand
sides of its balance rows.
"""
import itertools
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..config.settings import GenerationAdversary, RobustSettings
from ..core_model.case import InvestmentPlan, NetworkCase, OperationalState
from ..exceptions import EnumerationGuardError, FormulationError
from ..formulation.cones import ConeApproxConfig
from ..formulation.milp import LinExpr, MilpInstance, Sense
from ..formulation.planning_model import ABSENT, PlanningModel, ThermalMode, build_operational_model
from ..solver_gateway.extraction import extract_state
from ..solver_gateway.gateway import MilpSolution, SolveOptions, SolveStatus, solve
from .uncertainty import Scenario, ScenarioOrigin, TargetMask, UncertaintyBox


logger = logging.getLogger(__name__)

SHED = "shed"
JOINT = "joint"
REMOVED = "removed"
SLACK = "slack"

# shedding outside the mask is allowed in the joint reading but kept off unless needed
UNMASKED_SHED_WEIGHT = 1e-4

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
ANGLE_TOL = 1e-6  # radians


@dataclass
class AdversaryResult:
    """Outcome of one adversarial search"""
    scenario: Scenario
    objective: float
    mask: TargetMask
    violated: FrozenSet[Tuple[int, ...]] = frozenset()
    directions: Dict[Tuple[int, ...], float] = field(default_factory=dict)


@dataclass
class _PeriodOutcome:
    status: SolveStatus
    objective: float
    values: Optional[np.ndarray]


class SubproblemContext:
    """
    Period LPs and solved load assignments for one plan

    Shared by all targets of a sweep; safe to use from several threads.
    """

    def __init__(self, case: NetworkCase, plan: InvestmentPlan, cone_cfg: ConeApproxConfig,
                 opts: Optional[SolveOptions] = None, robust: Optional[RobustSettings] = None):
        self.case = case
        self.plan = plan
        self.cone_cfg = cone_cfg
        self.opts = opts or SolveOptions()
        self.robust = robust or RobustSettings()
        self.solves = 0
        self._models: Dict[Tuple[str, int], PlanningModel] = {}
        self._shed_caps: Dict[Tuple[str, int], Tuple[List[int], List[int]]] = {}
        self._outcomes: Dict[Tuple, _PeriodOutcome] = {}
        self._lock = threading.Lock()

    def period_model(self, kind: str, t: int) -> PlanningModel:
        key = (kind, t)
        with self._lock:
            model = self._models.get(key)
        if model is not None:
            return model

        p, q = self.case.period_loads
        thermal = {SHED: ThermalMode.ENFORCED, JOINT: ThermalMode.ENFORCED,
                   REMOVED: ThermalMode.REMOVED, SLACK: ThermalMode.SLACK}[kind]
        model = build_operational_model(self.case, self.plan, p, q, [t], self.cone_cfg,
                                        shedding=kind in (SHED, JOINT), thermal=thermal, name=f"{kind}_t{t}")
        ops = model.operations[0]
        caps = None
        if kind == SHED:
            model.instance.set_objective(LinExpr.total(
                LinExpr.var(int(v)) for v in np.concatenate([ops.p_shed[:, 0], ops.q_shed[:, 0]])))
        elif kind == JOINT:
            # a node cannot shed more than its own load; rhs rewritten per assignment
            caps = ([model.instance.add_constraint(LinExpr.var(int(ops.p_shed[i, 0])), Sense.LE, float(p[i, t]),
                                                   "shed_cap_p", (i, t)) for i in range(self.case.n)],
                    [model.instance.add_constraint(LinExpr.var(int(ops.q_shed[i, 0])), Sense.LE, float(q[i, t]),
                                                   "shed_cap_q", (i, t)) for i in range(self.case.n)])
        elif kind == SLACK:
            model.instance.set_objective(LinExpr.total(
                LinExpr.var(int(v)) for v in ops.thermal_slack[:, 0] if v != ABSENT))
        with self._lock:
            if caps is not None:
                self._shed_caps.setdefault(key, caps)
            return self._models.setdefault(key, model)

    def solve_period(self, kind: str, t: int, p_col: np.ndarray, q_col: np.ndarray,
                     objective: Optional[Tuple[Tuple, LinExpr]] = None) -> _PeriodOutcome:
        """
        Solve the period LP of the given kind for one load column

        Args:
            kind: SHED, JOINT, REMOVED or SLACK
            t: Period index
            p_col, q_col: Loads of the period, shape (n,)
            objective: (cache key, expression) replacing the default objective

        Returns:
            _PeriodOutcome with the point when one exists
        """
        key = (kind, t, tuple(np.round(p_col, 9)), tuple(np.round(q_col, 9)),
               None if objective is None else objective[0])
        with self._lock:
            hit = self._outcomes.get(key)
        if hit is not None:
            return hit

        model = self.period_model(kind, t)
        ops = model.operations[0]
        updates = {}
        for i in range(self.case.n):
            updates[int(ops.balance_p[i, 0])] = -float(p_col[i])
            updates[int(ops.balance_q[i, 0])] = -float(q_col[i])
        if kind == JOINT:
            p_caps, q_caps = self._shed_caps[(kind, t)]
            for i in range(self.case.n):
                updates[p_caps[i]] = float(p_col[i])
                updates[q_caps[i]] = float(q_col[i])
        instance: MilpInstance = model.instance.with_rhs(updates, name=f"{model.instance.name}_v{len(self._outcomes)}")
        if objective is not None:
            instance = instance.with_objective(objective[1])

        solution: MilpSolution = solve(instance, self.opts)
        if solution.status is SolveStatus.UNBOUNDED:
            raise FormulationError(f"Subproblem {instance.name} is unbounded")
        outcome = _PeriodOutcome(solution.status,
                                 solution.objective if solution.has_point else math.nan,
                                 solution.values if solution.has_point else None)
        with self._lock:
            self.solves += 1
            self._outcomes[key] = outcome
        return outcome

    # ------------------------------------------------------------------ readers

    def rating(self, i: int, j: int, t: int) -> float:
        y = int(self.case.period_year[t])
        return float(self.plan.gamma[i, j, y]) * self.case.electrical.s_rating

    def built_edges(self, t: int) -> List[Tuple[int, int]]:
        y = int(self.case.period_year[t])
        return [(i, j) for i, j in self.case.edges if self.plan.gamma[i, j, y] > 0]

    def arc_flow(self, kind: str, t: int, values: np.ndarray, a: int, b: int) -> Tuple[float, float]:
        ops = self.period_model(kind, t).operations[0]
        k = self.case.arcs.index((a, b))
        if ops.p[k, 0] == ABSENT:
            return 0.0, 0.0
        return float(values[ops.p[k, 0]]), float(values[ops.q[k, 0]])

    def edge_excess(self, kind: str, t: int, values: np.ndarray, i: int, j: int) -> Tuple[float, float]:
        """(p^2+q^2 - rating^2 on the heavier arc, angle of that flow)"""
        best, angle = -math.inf, 0.0
        for a, b in ((i, j), (j, i)):
            p, q = self.arc_flow(kind, t, values, a, b)
            excess = p * p + q * q - self.rating(i, j, t) ** 2
            if excess > best:
                sign = 1.0 if (a, b) == (i, j) else -1.0
                best, angle = excess, math.atan2(sign * q, sign * p)
        return best, angle


def _column_loads(box: UncertaintyBox, coords: Sequence[Tuple[str, int, int]], high: Sequence[bool],
                  t: int) -> Tuple[np.ndarray, np.ndarray]:
    p, q = box.vertex(coords, high)
    return p[:, t], q[:, t]


def _assignments(n_coords: int) -> Iterable[Tuple[bool, ...]]:
    # upper vertex first so ties resolve to it
    return itertools.product((True, False), repeat=n_coords)


def _enumerated_coordinates(box: UncertaintyBox, t: int, nodes: Iterable[int], cap: int,
                            whole_period: bool = True) -> List[Tuple[str, int, int]]:
    """
    Coordinates whose bound assignments are enumerated in period t

    Every uncertain coordinate of the period when there are at most cap of them
    (and whole_period is set), else those of the given nodes.

    Raises:
        EnumerationGuardError: the nodes alone carry more than cap coordinates
    """
    nodes = sorted(set(nodes))
    if whole_period:
        coords = box.uncertain_coordinates(periods=[t])
        if len(coords) <= cap:
            return coords
    coords = box.uncertain_coordinates(periods=[t], nodes=nodes)
    if len(coords) > cap:
        raise EnumerationGuardError(f"Period {t}: nodes {nodes} carry {len(coords)} uncertain coordinates, "
                                    f"above robust.max_enumerated_coordinates = {cap}")
    return coords


def _assemble(box: UncertaintyBox, picks: Dict[int, Tuple[Sequence, Sequence]],
              origin: ScenarioOrigin) -> Scenario:
    """Upper vertex with the chosen assignment in each listed period"""
    p, q = box.upper()
    for t, (coords, high) in picks.items():
        p_t, q_t = box.vertex(coords, high)
        p[:, t], q[:, t] = p_t[:, t], q_t[:, t]
    return Scenario(p_load=p, q_load=q, origin=origin)


def _check_plan(case: NetworkCase, plan: InvestmentPlan, box: UncertaintyBox):
    if plan.gamma.shape != (case.n, case.n, case.horizon_years):
        raise FormulationError(f"Plan shape {plan.gamma.shape} does not match the case")
    if box.shape != (case.n, case.n_periods):
        raise FormulationError(f"Box shape {box.shape} does not match the case")


# ----------------------------------------------------------------------------
# Generation infeasibility
# ----------------------------------------------------------------------------

def _shed_values(ctx: SubproblemContext, kind: str, t: int, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ops = ctx.period_model(kind, t).operations[0]
    return values[ops.p_shed[:, 0]], values[ops.q_shed[:, 0]]


def _joint_objective(ctx: SubproblemContext, t: int, nodes: Sequence[int]) -> LinExpr:
    """Negated shedding at the masked nodes, lightly penalised shedding elsewhere"""
    ops = ctx.period_model(JOINT, t).operations[0]
    expr = LinExpr()
    for i in range(ctx.case.n):
        weight = -1.0 if i in nodes else UNMASKED_SHED_WEIGHT
        expr = expr + LinExpr.var(int(ops.p_shed[i, 0]), weight) + LinExpr.var(int(ops.q_shed[i, 0]), weight)
    return expr


def _generation_period(ctx: SubproblemContext, box: UncertaintyBox, t: int,
                       nodes: Sequence[int]) -> Tuple[float, list, tuple, Optional[np.ndarray], str]:
    """Best assignment of one period: (value, coords, assignment, point, model kind)"""
    tol = ctx.robust.tol
    cap = ctx.robust.max_enumerated_coordinates
    if ctx.robust.generation_adversary is GenerationAdversary.JOINT:
        kind = JOINT
        coords = _enumerated_coordinates(box, t, nodes, cap, whole_period=False)
        objective = (("masked", tuple(nodes)), _joint_objective(ctx, t, nodes))
    else:
        kind = SHED
        coords = _enumerated_coordinates(box, t, nodes, cap)
        objective = None

    best, best_high, best_values = -math.inf, None, None
    for high in _assignments(len(coords)):
        p_col, q_col = _column_loads(box, coords, high, t)
        outcome = ctx.solve_period(kind, t, p_col, q_col, objective=objective)
        if outcome.values is None:
            # technical minimum cannot be met; no shedding variable absorbs a surplus
            value = math.inf
        elif kind == JOINT:
            p_shed, q_shed = _shed_values(ctx, JOINT, t, outcome.values)
            value = float(sum(p_shed[i] + q_shed[i] for i in nodes))
        else:
            value = outcome.objective
        if value > best + tol or best_high is None:
            best, best_high, best_values = value, high, outcome.values
    return best, coords, best_high, best_values, kind


def search_generation(ctx: SubproblemContext, box: UncertaintyBox, mask: TargetMask) -> AdversaryResult:
    """
    Worst box vertex for the shedding of the masked periods

    In the bilevel reading (default) each period's objective is the least total
    shedding any dispatch achieves at the vertex. In the joint reading the
    dispatch is chosen together with the loads to maximise the shedding at
    the masked nodes; only their coordinates are enumerated.
    """
    if mask.kind != "generation":
        raise ValueError("search_generation needs a generation mask")
    tol = ctx.robust.tol
    total = 0.0
    picks = {}
    violated = set()
    for t in mask.periods:
        nodes = sorted({i for i, tt in mask.entries if tt == t})
        best, coords, best_high, best_values, kind = _generation_period(ctx, box, t, nodes)
        picks[t] = (coords, best_high)
        total += best
        if best_values is not None:
            p_shed, q_shed = _shed_values(ctx, kind, t, best_values)
            violated.update((i, t) for i in range(ctx.case.n) if p_shed[i] + q_shed[i] > tol)
        elif math.isinf(best):
            violated.update((i, t) for i in nodes)

    scenario = _assemble(box, picks, ScenarioOrigin.GENERATION_ADVERSARY)
    return AdversaryResult(scenario=scenario, objective=max(total, 0.0), mask=mask, violated=frozenset(violated))


def adversarial_generation(case: NetworkCase, plan: InvestmentPlan, box: UncertaintyBox, mask: TargetMask,
                           cone_cfg: ConeApproxConfig, opts: Optional[SolveOptions] = None,
                           robust: Optional[RobustSettings] = None,
                           context: Optional[SubproblemContext] = None) -> Tuple[Scenario, float]:
    """
    Scenario maximising the shedding at the masked nodes and periods

    Args:
        case: Planning case
        plan: Fixed investment plan
        box: Load uncertainty box
        mask: Generation mask of (node, period) entries
        cone_cfg: Cone approximation accuracy
        opts: Solve options
        robust: Tolerance, enumeration cap and adversary reading
        context: Shared per-plan cache (created when omitted)

    Returns:
        (Scenario at a box vertex, objective >= 0)

    Raises:
        EnumerationGuardError: a masked period has too many uncertain coordinates
    """
    _check_plan(case, plan, box)
    ctx = context or SubproblemContext(case, plan, cone_cfg, opts, robust)
    result = search_generation(ctx, box, mask)
    return result.scenario, result.objective


# ----------------------------------------------------------------------------
# Thermal infeasibility
# ----------------------------------------------------------------------------

def _direction_objective(ctx: SubproblemContext, t: int, entries: Sequence[Tuple[int, int, int]],
                         base: Dict[Tuple[int, ...], float], offset: float) -> LinExpr:
    """Minimise the negated projection of each masked flow onto its direction"""
    ops = ctx.period_model(REMOVED, t).operations[0]
    expr = LinExpr()
    for entry in entries:
        i, j, _ = entry
        k = ctx.case.arcs.index((i, j))
        if ops.p[k, 0] == ABSENT:
            continue
        theta = base.get(entry, 0.0) + offset
        expr = expr - LinExpr.var(int(ops.p[k, 0]), math.cos(theta)) - LinExpr.var(int(ops.q[k, 0]), math.sin(theta))
    return expr


@dataclass
class _DirectionPoint:
    offset: float
    support: float      # summed projections, the LP value
    excess: float       # summed p^2+q^2 - rating^2 of the LP point
    values: Optional[np.ndarray]


def _solve_direction(ctx: SubproblemContext, t: int, entries: Sequence[Tuple[int, int, int]],
                     base: Dict[Tuple[int, ...], float], p_col: np.ndarray, q_col: np.ndarray,
                     offset: float) -> _DirectionPoint:
    expr = _direction_objective(ctx, t, entries, base, offset)
    key = (tuple(entries), tuple(sorted(base.items())), round(offset % (2.0 * math.pi), 12))
    outcome = ctx.solve_period(REMOVED, t, p_col, q_col, objective=(key, expr))
    if outcome.values is None:
        return _DirectionPoint(offset, -math.inf, -math.inf, None)
    excess = sum(ctx.edge_excess(REMOVED, t, outcome.values, i, j)[0] for i, j, _ in entries)
    return _DirectionPoint(offset, -outcome.objective, excess, outcome.values)


def _refine_direction(ctx: SubproblemContext, t: int, entries: Sequence[Tuple[int, int, int]],
                      base: Dict[Tuple[int, ...], float], p_col: np.ndarray, q_col: np.ndarray,
                      start: _DirectionPoint, width: float) -> _DirectionPoint:
    """
    Golden-section search of the support value over [offset - width, offset + width]

    The largest flow norm of a convex set is the largest support value over
    all directions, so the search closes the gap left between fan directions.
    Returns the visited point with the largest excess.
    """
    def solve_at(offset: float) -> _DirectionPoint:
        return _solve_direction(ctx, t, entries, base, p_col, q_col, offset)

    best = start
    lo, hi = start.offset - width, start.offset + width
    a, b = solve_at(hi - GOLDEN * (hi - lo)), solve_at(lo + GOLDEN * (hi - lo))
    for point in (a, b):
        if point.excess > best.excess:
            best = point
    while hi - lo > ANGLE_TOL:
        if a.support >= b.support:
            hi, b = b.offset, a
            a = solve_at(hi - GOLDEN * (hi - lo))
            point = a
        else:
            lo, a = a.offset, b
            b = solve_at(lo + GOLDEN * (hi - lo))
            point = b
        if point.excess > best.excess:
            best = point
    return best


def search_thermal(ctx: SubproblemContext, box: UncertaintyBox, mask: TargetMask,
                   base_angles: Optional[Dict[Tuple[int, ...], float]] = None) -> AdversaryResult:
    """
    Worst box vertex and dispatch for the line-rating excess of the masked corridors

    Each vertex is scored over a fan of flow directions. For a single corridor
    the best directions are then refined, so the excess is exact up to
    ANGLE_TOL; for several corridors the fan result stands.
    """
    if mask.kind != "thermal":
        raise ValueError("search_thermal needs a thermal mask")
    base = dict(base_angles or {})
    K = ctx.robust.thermal_directions
    tol = ctx.robust.tol
    total = 0.0
    picks = {}
    violated = set()
    directions = {}
    for t in mask.periods:
        entries = sorted(e for e in mask.entries if e[2] == t)
        nodes = sorted({v for i, j, _ in entries for v in (i, j)})
        coords = _enumerated_coordinates(box, t, nodes, ctx.robust.max_enumerated_coordinates)

        fans = []
        for high in _assignments(len(coords)):
            p_col, q_col = _column_loads(box, coords, high, t)
            vertex_best = None
            for k in range(K):
                point = _solve_direction(ctx, t, entries, base, p_col, q_col, 2.0 * math.pi * k / K)
                if point.values is not None and (vertex_best is None or point.excess > vertex_best.excess + tol):
                    vertex_best = point
            if vertex_best is not None:
                fans.append([high, p_col, q_col, vertex_best])

        if len(entries) == 1 and fans:
            i, j, _ = entries[0]
            rating_sq = ctx.rating(i, j, t) ** 2
            spread = 1.0 / math.cos(math.pi / K) ** 2
            incumbent = max(f[3].excess for f in fans)
            for fan in sorted(fans, key=lambda f: -f[3].excess):
                # no direction beats the fan by more than the spread factor on the norm
                if (fan[3].excess + rating_sq) * spread - rating_sq <= incumbent + tol and fan[3].excess < incumbent:
                    continue
                fan[3] = _refine_direction(ctx, t, entries, base, fan[1], fan[2], fan[3], 2.0 * math.pi / K)
                incumbent = max(incumbent, fan[3].excess)

        best, best_high, best_values = -math.inf, None, None
        for high, _, _, point in fans:
            if point.excess > best + tol or best_high is None:
                best, best_high, best_values = point.excess, high, point.values
        if best_high is None:
            logger.debug(f"Thermal search: no vertex of period {t} admits a dispatch")
            best_high = tuple(True for _ in coords)
            best = -sum(ctx.rating(i, j, t) ** 2 for i, j, _ in entries)
        picks[t] = (coords, best_high)
        total += best
        if best_values is not None:
            for i, j in ctx.built_edges(t):
                excess, angle = ctx.edge_excess(REMOVED, t, best_values, i, j)
                if excess > tol:
                    violated.add((i, j, t))
                    directions[(i, j, t)] = angle

    scenario = _assemble(box, picks, ScenarioOrigin.THERMAL_ADVERSARY)
    return AdversaryResult(scenario=scenario, objective=total, mask=mask, violated=frozenset(violated),
                           directions=directions)


def adversarial_thermal(case: NetworkCase, plan: InvestmentPlan, box: UncertaintyBox, mask: TargetMask,
                        cone_cfg: ConeApproxConfig, opts: Optional[SolveOptions] = None,
                        robust: Optional[RobustSettings] = None,
                        context: Optional[SubproblemContext] = None) -> Tuple[Scenario, float]:
    """
    Scenario and dispatch maximising p^2+q^2 - (gamma*S)^2 over the masked corridors

    The line rating is dropped and the squared flow is maximised over a fan of
    flow directions at every enumerated vertex, refined by a direction search
    for a single corridor. The objective is negative when no violation is
    attainable.
    """
    _check_plan(case, plan, box)
    for i, j, t in mask.entries:
        if i >= j or plan.gamma[i, j, int(case.period_year[t])] == 0:
            raise FormulationError(f"Thermal target ({i}, {j}, {t}) is not a built corridor with i < j")
    ctx = context or SubproblemContext(case, plan, cone_cfg, opts, robust)
    result = search_thermal(ctx, box, mask)
    return result.scenario, result.objective


# ----------------------------------------------------------------------------
# Corrective problems
# ----------------------------------------------------------------------------

def _periods(case: NetworkCase, periods: Optional[Iterable[int]]) -> List[int]:
    return list(range(case.n_periods)) if periods is None else sorted(set(periods))


def corrective_generation(case: NetworkCase, plan: InvestmentPlan, scenario: Scenario,
                          cone_cfg: ConeApproxConfig, opts: Optional[SolveOptions] = None,
                          periods: Optional[Iterable[int]] = None,
                          context: Optional[SubproblemContext] = None) -> float:
    """
    Minimum total shedding needed to serve the scenario with the plan

    Returns:
        Residual >= 0; 0 means the scenario is not problematic. math.inf when a
        generator minimum cannot be absorbed.
    """
    ctx = context or SubproblemContext(case, plan, cone_cfg, opts)
    residual = 0.0
    for t in _periods(case, periods):
        outcome = ctx.solve_period(SHED, t, scenario.p_load[:, t], scenario.q_load[:, t])
        if outcome.values is None:
            logger.warning(f"Corrective generation: period {t} infeasible even with shedding "
                           f"({outcome.status.value}); residual is infinite")
            return math.inf
        residual += max(outcome.objective, 0.0)
    return residual


def corrective_thermal(case: NetworkCase, plan: InvestmentPlan, scenario: Scenario,
                       cone_cfg: ConeApproxConfig, opts: Optional[SolveOptions] = None,
                       periods: Optional[Iterable[int]] = None,
                       context: Optional[SubproblemContext] = None) -> float:
    """
    Minimum total squared rating excess over every corridor and period

    Returns:
        Residual >= 0, or math.inf when the scenario cannot be served at all
    """
    ctx = context or SubproblemContext(case, plan, cone_cfg, opts)
    residual = 0.0
    for t in _periods(case, periods):
        outcome = ctx.solve_period(SLACK, t, scenario.p_load[:, t], scenario.q_load[:, t])
        if outcome.values is None:
            logger.warning(f"Corrective thermal: period {t} has no dispatch ({outcome.status.value}); "
                           f"residual is infinite")
            return math.inf
        residual += max(outcome.objective, 0.0)
    return residual


def operate(case: NetworkCase, plan: InvestmentPlan, scenario: Scenario, cone_cfg: ConeApproxConfig,
            opts: Optional[SolveOptions] = None) -> Tuple[float, OperationalState]:
    """Least-shedding dispatch of the whole horizon; returns (total shedding, state)"""
    model = build_operational_model(case, plan, scenario.p_load, scenario.q_load, range(case.n_periods),
                                    cone_cfg, shedding=True, name="operate")
    ops = model.operations[0]
    model.instance.set_objective(LinExpr.total(
        LinExpr.var(int(v)) for v in np.concatenate([ops.p_shed.reshape(-1), ops.q_shed.reshape(-1)])))
    solution = solve(model.instance, opts)
    if not solution.has_point:
        raise FormulationError(f"No dispatch exists for the plan ({solution.status.value})")
    return max(solution.objective, 0.0), extract_state(model, solution.values, ops)
