"""
Adversary sweep and the robust planning loop
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from ..config.settings import RobustSettings
from ..core_model.case import InvestmentPlan, NetworkCase
from ..exceptions import IterationLimitError, SolverBackendError
from ..formulation.cones import ConeApproxConfig
from ..formulation.planning_model import build_main_problem
from ..solver_gateway.extraction import extract, polish
from ..solver_gateway.gateway import SolveOptions, solve
from ..utils.logger import active_logger
from .subproblems import (
    AdversaryResult, SubproblemContext, corrective_generation, corrective_thermal, search_generation,
    search_thermal
)
from .uncertainty import IterationAudit, RobustResult, Scenario, ScenarioOrigin, TargetMask, UncertaintyBox


logger = logging.getLogger(__name__)


@dataclass
class SweepReport:
    """Problematic scenarios of one sweep with the adversary objectives per target"""
    problematic: List[Scenario] = field(default_factory=list)
    generation_objectives: List[float] = field(default_factory=list)
    thermal_objectives: List[float] = field(default_factory=list)
    subproblems: int = 0

    def count(self, origin: ScenarioOrigin) -> int:
        return sum(1 for s in self.problematic if s.origin is origin)


def generation_targets(case: NetworkCase) -> List[TargetMask]:
    return [TargetMask.generation([(i, t)]) for t in range(case.n_periods) for i in range(case.n)]


def thermal_targets(case: NetworkCase, plan: InvestmentPlan) -> List[TargetMask]:
    targets = []
    for t in range(case.n_periods):
        y = int(case.period_year[t])
        for i, j in case.edges:
            if plan.gamma[i, j, y] > 0:
                targets.append(TargetMask.thermal([(i, j, t)]))
    return targets


def _generation_target(ctx: SubproblemContext, box: UncertaintyBox,
                       mask: TargetMask) -> Tuple[AdversaryResult, Optional[Scenario]]:
    tol = ctx.robust.tol
    result = search_generation(ctx, box, mask)
    if result.violated > mask.entries:
        # re-solve once on the whole violated set
        result = search_generation(ctx, box, TargetMask.generation(result.violated))
    if result.objective <= tol:
        return result, None
    residual = corrective_generation(ctx.case, ctx.plan, result.scenario, ctx.cone_cfg,
                                     periods=result.mask.periods, context=ctx)
    logger.debug(f"Generation target {mask.sorted_entries()}: adversary {result.objective:.6g}, "
                 f"corrective {residual:.6g}")
    if residual <= tol:
        return result, None
    return result, result.scenario.with_residual(residual)


def _thermal_target(ctx: SubproblemContext, box: UncertaintyBox,
                    mask: TargetMask) -> Tuple[AdversaryResult, Optional[Scenario]]:
    tol = ctx.robust.tol
    result = search_thermal(ctx, box, mask)
    if result.violated > mask.entries:
        result = search_thermal(ctx, box, TargetMask.thermal(result.violated), base_angles=result.directions)
    if result.objective <= tol:
        return result, None
    residual = corrective_thermal(ctx.case, ctx.plan, result.scenario, ctx.cone_cfg,
                                  periods=result.mask.periods, context=ctx)
    logger.debug(f"Thermal target {mask.sorted_entries()}: adversary {result.objective:.6g}, "
                 f"corrective {residual:.6g}")
    if residual <= tol:
        return result, None
    return result, result.scenario.with_residual(residual)


def run_sweep(case: NetworkCase, plan: InvestmentPlan, box: UncertaintyBox, cone_cfg: ConeApproxConfig,
              opts: Optional[SolveOptions] = None, robust: Optional[RobustSettings] = None) -> SweepReport:
    """
    Solve the adversary for every singleton target of both families

    Args:
        case: Planning case
        plan: Fixed investment plan
        box: Load uncertainty box
        cone_cfg: Cone approximation accuracy
        opts: Solve options for every subproblem
        robust: Tolerance, worker count, enumeration limits

    Returns:
        SweepReport with problematic scenarios de-duplicated by fingerprint
    """
    robust = robust or RobustSettings()
    box.check_case(case)
    ctx = SubproblemContext(case, plan, cone_cfg, opts, robust)
    jobs = ([(_generation_target, m) for m in generation_targets(case)]
            + [(_thermal_target, m) for m in thermal_targets(case, plan)])

    if robust.workers > 1:
        with ThreadPoolExecutor(max_workers=robust.workers) as pool:
            futures = [pool.submit(fn, ctx, box, mask) for fn, mask in jobs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [fn(ctx, box, mask) for fn, mask in jobs]

    report = SweepReport(subproblems=ctx.solves)
    seen = set()
    for (fn, _), (result, scenario) in zip(jobs, outcomes):
        if fn is _generation_target:
            report.generation_objectives.append(result.objective)
        else:
            report.thermal_objectives.append(result.objective)
        if scenario is not None and scenario.fingerprint not in seen:
            seen.add(scenario.fingerprint)
            report.problematic.append(scenario)

    logger.info(f"Sweep: {len(jobs)} targets, {ctx.solves} subproblems, "
                f"{report.count(ScenarioOrigin.GENERATION_ADVERSARY)} generation / "
                f"{report.count(ScenarioOrigin.THERMAL_ADVERSARY)} thermal problematic scenarios")
    return report


def adversary_sweep(case: NetworkCase, plan: InvestmentPlan, box: UncertaintyBox, cone_cfg: ConeApproxConfig,
                    opts: Optional[SolveOptions] = None,
                    robust: Optional[RobustSettings] = None) -> List[Scenario]:
    """Problematic scenarios of the plan over the box (empty when the plan is robust)"""
    return run_sweep(case, plan, box, cone_cfg, opts, robust).problematic


def _unique(scenarios: Iterable[Scenario]) -> List[Scenario]:
    seen, out = set(), []
    for s in scenarios:
        if s.fingerprint not in seen:
            seen.add(s.fingerprint)
            out.append(s)
    return out


def robust_plan(case: NetworkCase, box: UncertaintyBox, cone_cfg: ConeApproxConfig,
                opts: Optional[SolveOptions] = None, robust: Optional[RobustSettings] = None,
                initial: Sequence[Scenario] = ()) -> RobustResult:
    """
    Plan protected against every vertex of the box

    Starts from the deterministic scenario (plus any restored scenarios), then
    alternates main-problem solves with adversary sweeps until a sweep finds no
    problematic scenario.

    Args:
        case: Planning case
        box: Load uncertainty box containing the deterministic loads
        cone_cfg: Cone approximation accuracy
        opts: Solve options
        robust: Loop settings (tol, max_iterations, workers, ...)
        initial: Scenarios to protect from the first iteration on

    Returns:
        RobustResult

    Raises:
        IterationLimitError: the cap was reached (carries the audit so far)
    """
    opts = opts or SolveOptions()
    robust = robust or RobustSettings()
    box.check_case(case)
    scenarios = _unique([Scenario.deterministic(case)] + list(initial))
    audit: List[IterationAudit] = []
    session = active_logger()
    previous = -math.inf

    for iteration in range(1, robust.max_iterations + 1):
        started = time.perf_counter()
        model = build_main_problem(case, scenarios, cone_cfg, name=f"main_{iteration}")
        solution = solve(model.instance, opts)
        if not solution.has_point:
            raise SolverBackendError(f"Main problem of iteration {iteration} ended {solution.status.value}")
        solution = polish(model, solution, opts)
        plan, states, money = extract(model, solution, opts.integrality_tol)

        decrease = 0.0
        if money.npv < previous - 1e-6 * (1.0 + abs(previous)):
            decrease = previous - money.npv
            logger.warning(f"Main objective decreased from {previous:.9g} to {money.npv:.9g}")
        previous = money.npv

        report = run_sweep(case, plan, box, cone_cfg, opts, robust)
        known = {s.fingerprint for s in scenarios}
        fresh = [s for s in report.problematic if s.fingerprint not in known]
        entry = IterationAudit(
            iteration=iteration, main_objective=money.npv, capex=money.discounted_capex,
            opex=money.discounted_opex, scenarios_total=len(scenarios),
            added_generation=sum(1 for s in fresh if s.origin is ScenarioOrigin.GENERATION_ADVERSARY),
            added_thermal=sum(1 for s in fresh if s.origin is ScenarioOrigin.THERMAL_ADVERSARY),
            generation_objectives=report.generation_objectives,
            thermal_objectives=report.thermal_objectives,
            subproblems=report.subproblems,
            wall_time=time.perf_counter() - started,
            objective_decrease=decrease,
        )
        audit.append(entry)
        if session is not None:
            session.log_iteration(iteration, entry.main_objective, entry.capex, entry.opex,
                                  entry.scenarios_total, entry.added_generation, entry.added_thermal,
                                  entry.subproblems, entry.wall_time)
        else:
            logger.info(f"Iteration {iteration}: objective {money.npv:.6g}, |S|={len(scenarios)}, "
                        f"+{len(fresh)} scenarios")

        if not report.problematic:
            return RobustResult(plan=plan, scenarios=scenarios, iterations=iteration, audit=audit,
                                money=money, states=states, gap=solution.gap)
        if not fresh:
            raise IterationLimitError(f"Iteration {iteration}: every problematic scenario is already protected; "
                                      f"the loop cannot progress", audit)
        scenarios = scenarios + fresh

    raise IterationLimitError(f"No robust plan after {robust.max_iterations} iterations "
                              f"({len(scenarios)} scenarios)", audit)
