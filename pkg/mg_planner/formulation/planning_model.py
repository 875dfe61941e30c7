"""
Planning MILP construction

The same operational block serves the main problem (investments are
variables) and the fixed-plan subproblems of the robust loop (investments are
constants, so deactivated big-M rows and unbuilt corridors are pruned).
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from ..core_model.case import InvestmentPlan, NetworkCase
from ..exceptions import FormulationError
from .big_m import BigMSet, compute_big_m, model_impedance
from .cones import ConeApproxConfig, approximate_cone, approximate_rotated_cone
from .milp import LinExpr, MilpInstance, Sense, VarKind


logger = logging.getLogger(__name__)

ABSENT = -1


class ThermalMode(Enum):
    """How the line rating enters an operational block"""
    ENFORCED = "enforced"   # p^2+q^2 <= (gamma*S)^2
    REMOVED = "removed"     # thermal adversary
    SLACK = "slack"         # p^2+q^2 <= (gamma*S)^2 + e, e >= 0


class LoadScenario(Protocol):
    p_load: np.ndarray
    q_load: np.ndarray


@dataclass(frozen=True)
class _Loads:
    p_load: np.ndarray
    q_load: np.ndarray


@dataclass
class InvestmentVars:
    """Variable ids of the investment block"""
    gamma: np.ndarray   # (E, Y)
    omega: np.ndarray   # (E, Y)
    loi: np.ndarray     # (E, xi, Y)
    sigma: np.ndarray   # (n, Y)
    flow: np.ndarray    # (A, Y) fictitious connectivity flow


@dataclass
class OperationalVars:
    """Variable and row ids of one operational block; ABSENT marks pruned entries"""
    label: str
    periods: Tuple[int, ...]
    pg: np.ndarray        # (n, P)
    qg: np.ndarray
    p: np.ndarray         # (A, P) directed flows, arc order of case.arcs
    q: np.ndarray
    psi: np.ndarray       # (E, P)
    nu: np.ndarray        # (n, P)
    balance_p: np.ndarray  # (n, P) row ids, rhs = -load
    balance_q: np.ndarray
    p_shed: Optional[np.ndarray] = None
    q_shed: Optional[np.ndarray] = None
    thermal_slack: Optional[np.ndarray] = None  # (A, P)

    def column(self, t: int) -> int:
        return self.periods.index(t)


@dataclass
class PlanningModel:
    """A MilpInstance together with the maps needed to read its solutions"""
    instance: MilpInstance
    case: NetworkCase
    big_m: BigMSet
    cone_cfg: ConeApproxConfig
    operations: List[OperationalVars]
    investments: Optional[InvestmentVars] = None
    fixed_plan: Optional[InvestmentPlan] = None
    scenarios: List[LoadScenario] = field(default_factory=list)

    def investment_ids(self) -> List[int]:
        if self.investments is None:
            return []
        inv = self.investments
        return [int(v) for block in (inv.gamma, inv.omega, inv.loi, inv.sigma) for v in block.reshape(-1)]


def _v(idx: int) -> LinExpr:
    return LinExpr.var(int(idx)) if idx != ABSENT else LinExpr()


class _InvestmentView:
    """Investment quantities as plan constants or as model variables"""

    def __init__(self, case: NetworkCase, plan: Optional[InvestmentPlan] = None,
                 inv: Optional[InvestmentVars] = None):
        self.case = case
        self.plan = plan
        self.inv = inv
        self.fixed = plan is not None

    def gamma(self, e: int, y: int) -> Union[int, LinExpr]:
        if self.fixed:
            i, j = self.case.edges[e]
            return int(self.plan.gamma[i, j, y])
        return _v(self.inv.gamma[e, y])

    def omega(self, e: int, y: int) -> Union[int, LinExpr]:
        if self.fixed:
            i, j = self.case.edges[e]
            return int(self.plan.omega[i, j, y])
        return _v(self.inv.omega[e, y])

    def sigma(self, i: int, y: int) -> Union[int, LinExpr]:
        if self.fixed:
            return int(self.plan.sigma[i, y])
        return _v(self.inv.sigma[i, y])

    def loi(self, e: int, k: int, y: int) -> LinExpr:
        """Level indicator for k in 1..xi; k = xi+1 is identically zero"""
        if k > self.case.electrical.max_parallel:
            return LinExpr()
        return _v(self.inv.loi[e, k - 1, y])


def add_operational_block(model: MilpInstance, case: NetworkCase, view: _InvestmentView,
                          p_load: np.ndarray, q_load: np.ndarray, periods: Sequence[int],
                          big_m: BigMSet, cone_cfg: ConeApproxConfig, label: str,
                          shedding: bool = False,
                          thermal: ThermalMode = ThermalMode.ENFORCED) -> OperationalVars:
    """
    Add dispatch variables and operating constraints for the given periods

    Args:
        model: Instance receiving the block
        case: Planning case
        view: Investment quantities (fixed or variable)
        p_load, q_load: Loads of shape (n, n_periods); only the listed periods are read
        periods: Global period indices covered by the block
        big_m: Constants for the level-activated rows
        cone_cfg: Cone approximation accuracy
        label: Prefix separating this block's names from other blocks
        shedding: Add non-negative shedding to the balance rows
        thermal: Line-rating treatment

    Returns:
        OperationalVars for the block
    """
    el = case.electrical
    n, arcs, edges = case.n, case.arcs, case.edges
    n_per = len(periods)
    r, x = model_impedance(case)
    tan_phi, tan_th = el.tan_phi, el.tan_theta
    xi = el.max_parallel
    v2_lo, v2_hi = el.v_min ** 2, el.v_max ** 2
    arc_index = {a: k for k, a in enumerate(arcs)}
    relaxed_cap = 2.0 * max(xi * el.s_rating, n * el.p_gen_max / el.cos_phi_min)

    shape_n = (n, n_per)
    pg = np.full(shape_n, ABSENT, dtype=np.int64)
    qg = np.full(shape_n, ABSENT, dtype=np.int64)
    nu = np.full(shape_n, ABSENT, dtype=np.int64)
    bal_p = np.full(shape_n, ABSENT, dtype=np.int64)
    bal_q = np.full(shape_n, ABSENT, dtype=np.int64)
    p_shed = np.full(shape_n, ABSENT, dtype=np.int64) if shedding else None
    q_shed = np.full(shape_n, ABSENT, dtype=np.int64) if shedding else None
    pf = np.full((len(arcs), n_per), ABSENT, dtype=np.int64)
    qf = np.full((len(arcs), n_per), ABSENT, dtype=np.int64)
    psi = np.full((len(edges), n_per), ABSENT, dtype=np.int64)
    slack = np.full((len(arcs), n_per), ABSENT, dtype=np.int64) if thermal is ThermalMode.SLACK else None

    for tau, t in enumerate(periods):
        y = int(case.period_year[t])

        # generators, voltages, shedding
        for i in range(n):
            nu[i, tau] = model.add_var(f"nu_{label}_{i}_{t}", lb=v2_lo, ub=v2_hi)
            s = view.sigma(i, y)
            q_bound = tan_phi * el.p_gen_max
            if view.fixed:
                if s:
                    pg[i, tau] = model.add_var(f"pg_{label}_{i}_{t}", lb=el.p_gen_min, ub=el.p_gen_max)
                    qg[i, tau] = model.add_var(f"qg_{label}_{i}_{t}", lb=-q_bound, ub=q_bound)
            else:
                pg[i, tau] = model.add_var(f"pg_{label}_{i}_{t}", lb=0.0, ub=el.p_gen_max)
                qg[i, tau] = model.add_var(f"qg_{label}_{i}_{t}", lb=-q_bound, ub=q_bound)
                model.add_constraint(_v(pg[i, tau]) - el.p_gen_max * s, Sense.LE, 0.0, "gen_max", (label, i, t))
                model.add_constraint(_v(pg[i, tau]) - el.p_gen_min * s, Sense.GE, 0.0, "gen_min", (label, i, t))
            if pg[i, tau] != ABSENT:
                model.add_constraint(_v(qg[i, tau]) - tan_phi * _v(pg[i, tau]), Sense.LE, 0.0,
                                     "gen_q_hi", (label, i, t))
                model.add_constraint(_v(qg[i, tau]) + tan_phi * _v(pg[i, tau]), Sense.GE, 0.0,
                                     "gen_q_lo", (label, i, t))
            if shedding:
                p_shed[i, tau] = model.add_var(f"pshed_{label}_{i}_{t}", lb=0.0)
                q_shed[i, tau] = model.add_var(f"qshed_{label}_{i}_{t}", lb=0.0)

        # corridors
        for e, (i, j) in enumerate(edges):
            g = view.gamma(e, y)
            if view.fixed and g == 0:
                continue
            dist = float(case.distances[i, j])
            res, rea = r * dist, x * dist

            if view.fixed:
                cap = g * el.s_rating if thermal is ThermalMode.ENFORCED else max(relaxed_cap, g * el.s_rating)
            else:
                cap = xi * el.s_rating
            psi_ub = cap ** 2 / v2_lo
            psi[e, tau] = model.add_var(f"psi_{label}_{i}_{j}_{t}", lb=0.0, ub=psi_ub)
            psi_e = _v(psi[e, tau])
            if not view.fixed:
                model.add_constraint(psi_e - big_m.psi_max * view.omega(e, y), Sense.LE, 0.0,
                                     "psi_cap", (label, e, t))

            for a in ((i, j), (j, i)):
                k_arc = arc_index[a]
                pf[k_arc, tau] = model.add_var(f"p_{label}_{a[0]}_{a[1]}_{t}", lb=-cap, ub=cap)
                qf[k_arc, tau] = model.add_var(f"q_{label}_{a[0]}_{a[1]}_{t}", lb=-cap, ub=cap)

            ij, ji = arc_index[(i, j)], arc_index[(j, i)]
            p_sum = _v(pf[ij, tau]) + _v(pf[ji, tau])
            q_sum = _v(qf[ij, tau]) + _v(qf[ji, tau])

            # losses
            if view.fixed:
                model.add_constraint(p_sum - (res / g) * psi_e, Sense.EQ, 0.0, "loss_p", (label, e, g, t))
                model.add_constraint(q_sum - (rea / g) * psi_e, Sense.EQ, 0.0, "loss_q", (label, e, g, t))
            else:
                for k in range(1, xi + 1):
                    off = big_m.M1 - big_m.M1 * (view.loi(e, k, y) - view.loi(e, k + 1, y))
                    for fam, flow_sum, imp in (("loss_p", p_sum, res), ("loss_q", q_sum, rea)):
                        body = flow_sum - (imp / k) * psi_e
                        model.add_constraint(body - off, Sense.LE, 0.0, f"{fam}_hi", (label, e, k, t))
                        model.add_constraint(body + off, Sense.GE, 0.0, f"{fam}_lo", (label, e, k, t))
            model.add_constraint(p_sum, Sense.GE, 0.0, "loss_p_pos", (label, e, t))
            model.add_constraint(q_sum, Sense.GE, 0.0, "loss_q_pos", (label, e, t))

            for (a, b) in ((i, j), (j, i)):
                k_arc = arc_index[(a, b)]
                p_ab, q_ab = _v(pf[k_arc, tau]), _v(qf[k_arc, tau])
                nu_a, nu_b = _v(nu[a, tau]), _v(nu[b, tau])

                # current/voltage product
                approximate_rotated_cone(model, p_ab, q_ab, psi_e, nu_a, cone_cfg, "soc", (label, a, b, t))

                # voltage drop
                if view.fixed:
                    drop = (nu_b - nu_a + 2.0 * ((res / g) * p_ab + (rea / g) * q_ab)
                            - ((res ** 2 + rea ** 2) / g ** 2) * psi_e)
                    model.add_constraint(drop, Sense.EQ, 0.0, "vdrop", (label, a, b, g, t))
                else:
                    for k in range(1, xi + 1):
                        off = big_m.M2 - big_m.M2 * (view.loi(e, k, y) - view.loi(e, k + 1, y))
                        drop = (nu_b - nu_a + 2.0 * ((res / k) * p_ab + (rea / k) * q_ab)
                                - ((res ** 2 + rea ** 2) / k ** 2) * psi_e)
                        model.add_constraint(drop - off, Sense.LE, 0.0, "vdrop_hi", (label, a, b, k, t))
                        model.add_constraint(drop + off, Sense.GE, 0.0, "vdrop_lo", (label, a, b, k, t))

                # line rating
                if thermal is ThermalMode.ENFORCED:
                    approximate_cone(model, p_ab, q_ab, el.s_rating * view.gamma(e, y), cone_cfg,
                                     "thermal", (label, a, b, t))
                elif thermal is ThermalMode.SLACK:
                    slack[k_arc, tau] = model.add_var(f"dsq_{label}_{a}_{b}_{t}", lb=0.0)
                    rating_sq = (g * el.s_rating) ** 2
                    approximate_rotated_cone(model, p_ab, q_ab, rating_sq + _v(slack[k_arc, tau]), 1.0,
                                             cone_cfg, "thermal_slack", (label, a, b, t),
                                             balance=max(g * el.s_rating, 1.0))

                # angle difference, nu*gamma linearised per level
                if view.fixed:
                    nu_gamma = g * nu_a
                else:
                    nu_gamma = LinExpr()
                    for k in range(1, xi + 1):
                        loi_k = view.loi(e, k, y)
                        z = model.add_var(f"z_{label}_{a}_{b}_{k}_{t}", lb=0.0, ub=v2_hi)
                        z_e = _v(z)
                        idx = (label, a, b, k, t)
                        model.add_constraint(z_e - v2_hi * loi_k, Sense.LE, 0.0, "mc_ub_loi", idx)
                        model.add_constraint(z_e - v2_lo * loi_k, Sense.GE, 0.0, "mc_lb_loi", idx)
                        model.add_constraint(z_e - nu_a - v2_lo * loi_k, Sense.LE, -v2_lo, "mc_ub_nu", idx)
                        model.add_constraint(z_e - nu_a - v2_hi * loi_k, Sense.GE, -v2_hi, "mc_lb_nu", idx)
                        nu_gamma = nu_gamma + z_e
                angle_1 = res * (q_ab + tan_th * p_ab) + rea * (tan_th * q_ab - p_ab)
                angle_2 = rea * (p_ab + tan_th * q_ab) + res * (tan_th * p_ab - q_ab)
                model.add_constraint(angle_1 - tan_th * nu_gamma, Sense.LE, 0.0, "angle_1", (label, a, b, t))
                model.add_constraint(angle_2 - tan_th * nu_gamma, Sense.LE, 0.0, "angle_2", (label, a, b, t))

        # nodal balance: generation - load + shed = outgoing flows
        for i in range(n):
            out_p = LinExpr.total(_v(pf[arc_index[(i, j)], tau]) for j in range(n) if j != i)
            out_q = LinExpr.total(_v(qf[arc_index[(i, j)], tau]) for j in range(n) if j != i)
            lhs_p = out_p - _v(pg[i, tau])
            lhs_q = out_q - _v(qg[i, tau])
            if shedding:
                lhs_p = lhs_p - _v(p_shed[i, tau])
                lhs_q = lhs_q - _v(q_shed[i, tau])
            bal_p[i, tau] = model.add_constraint(lhs_p, Sense.EQ, -float(p_load[i, t]), "bal_p", (label, i, t))
            bal_q[i, tau] = model.add_constraint(lhs_q, Sense.EQ, -float(q_load[i, t]), "bal_q", (label, i, t))

    return OperationalVars(label=label, periods=tuple(int(t) for t in periods), pg=pg, qg=qg, p=pf, q=qf,
                           psi=psi, nu=nu, balance_p=bal_p, balance_q=bal_q,
                           p_shed=p_shed, q_shed=q_shed, thermal_slack=slack)


def _add_investments(model: MilpInstance, case: NetworkCase) -> InvestmentVars:
    n, Y = case.n, case.horizon_years
    edges, arcs = case.edges, case.arcs
    xi = case.electrical.max_parallel
    E = len(edges)

    gamma = model.add_vars("gamma", (E, Y), VarKind.INTEGER, 0, xi)
    omega = model.add_vars("omega", (E, Y), VarKind.BINARY)
    loi = model.add_vars("loi", (E, xi, Y), VarKind.BINARY)
    sigma = model.add_vars("sigma", (n, Y), VarKind.BINARY)
    flow = model.add_vars("f", (len(arcs), Y), VarKind.CONTINUOUS, 0.0, float(n))

    for y in range(Y):
        # investments are permanent
        if y > 0:
            for e in range(E):
                model.add_constraint(_v(gamma[e, y - 1]), Sense.LE, _v(gamma[e, y]), "mono_gamma", (e, y))
            for i in range(n):
                model.add_constraint(_v(sigma[i, y - 1]), Sense.LE, _v(sigma[i, y]), "mono_sigma", (i, y))

        # level indicators
        for e in range(E):
            model.add_constraint(LinExpr.total(_v(loi[e, k, y]) for k in range(xi)), Sense.EQ,
                                 _v(gamma[e, y]), "loi_sum", (e, y))
            model.add_constraint(_v(loi[e, 0, y]), Sense.EQ, _v(omega[e, y]), "loi_first", (e, y))
            for k in range(xi - 1):
                model.add_constraint(_v(loi[e, k, y]), Sense.GE, _v(loi[e, k + 1, y]), "loi_order", (e, k, y))

        # connectivity through a fictitious single-commodity flow from node 0
        model.add_constraint(LinExpr.total(_v(omega[e, y]) for e in range(E)), Sense.GE, float(n - 1),
                             "conn_count", (y,))
        arc_index = {a: k for k, a in enumerate(arcs)}
        edge_index = {ed: k for k, ed in enumerate(edges)}
        for k, (i, j) in enumerate(arcs):
            e = edge_index[(min(i, j), max(i, j))]
            model.add_constraint(_v(flow[k, y]) - n * _v(omega[e, y]), Sense.LE, 0.0, "conn_cap", (k, y))
        model.add_constraint(LinExpr.total(_v(flow[arc_index[(0, j)], y]) for j in range(1, n)),
                             Sense.EQ, float(n - 1), "conn_source", (y,))
        for i in range(1, n):
            inflow = LinExpr.total(_v(flow[arc_index[(j, i)], y]) for j in range(n) if j != i)
            outflow = LinExpr.total(_v(flow[arc_index[(i, j)], y]) for j in range(n) if j != i)
            model.add_constraint(inflow - outflow, Sense.EQ, 1.0, "conn_sink", (i, y))

    return InvestmentVars(gamma=gamma, omega=omega, loi=loi, sigma=sigma, flow=flow)


def _capex_expr(case: NetworkCase, inv: InvestmentVars) -> LinExpr:
    """Discounted line, pole and generator investment (year-0 stock is zero)"""
    cost = case.cost
    df = case.discount_factors
    expr = LinExpr()
    for y in range(case.horizon_years):
        for e, (i, j) in enumerate(case.edges):
            dist = float(case.distances[i, j])
            expr = expr + df[y] * dist * cost.c_cond * _v(inv.gamma[e, y])
            expr = expr + df[y] * dist * cost.c_pole * _v(inv.omega[e, y])
            if y > 0:
                expr = expr - df[y] * dist * cost.c_cond * _v(inv.gamma[e, y - 1])
                expr = expr - df[y] * dist * cost.c_pole * _v(inv.omega[e, y - 1])
        for i in range(case.n):
            expr = expr + df[y] * cost.c_gen * _v(inv.sigma[i, y])
            if y > 0:
                expr = expr - df[y] * cost.c_gen * _v(inv.sigma[i, y - 1])
    return expr


def _fixed_opex_expr(case: NetworkCase, view: _InvestmentView) -> LinExpr:
    """Discounted running cost a*sigma over every period"""
    df, weight = case.discount_factors, case.period_weight
    expr = LinExpr()
    for t in range(case.n_periods):
        y = int(case.period_year[t])
        for i in range(case.n):
            expr = expr + df[y] * weight[t] * case.cost.a * view.sigma(i, y)
    return expr


def dispatch_cost_expr(case: NetworkCase, ops: OperationalVars) -> LinExpr:
    """Discounted fuel cost b*P_G of one operational block"""
    df, weight = case.discount_factors, case.period_weight
    expr = LinExpr()
    for tau, t in enumerate(ops.periods):
        y = int(case.period_year[t])
        for i in range(case.n):
            if ops.pg[i, tau] != ABSENT:
                expr = expr + df[y] * weight[t] * case.cost.b * _v(ops.pg[i, tau])
    return expr


def _check_scenario(case: NetworkCase, scenario: LoadScenario, position: int):
    expected = (case.n, case.n_periods)
    for attr in ("p_load", "q_load"):
        shape = np.shape(getattr(scenario, attr))
        if shape != expected:
            raise FormulationError(f"Scenario {position}: {attr} has shape {shape}, expected {expected}")


def build_main_problem(case: NetworkCase, scenarios: Sequence[LoadScenario],
                       cone_cfg: ConeApproxConfig, name: str = "main") -> PlanningModel:
    """
    Planning MILP with one operational copy per scenario

    Args:
        case: Planning case
        scenarios: Load scenarios, each (n, n_periods); equiprobable
        cone_cfg: Cone approximation accuracy

    Returns:
        PlanningModel whose objective is CAPEX + mean scenario OPEX (discounted)
    """
    if not scenarios:
        raise FormulationError("The main problem needs at least one scenario")
    for position, scenario in enumerate(scenarios):
        _check_scenario(case, scenario, position)

    big_m = compute_big_m(case)
    model = MilpInstance(name)
    inv = _add_investments(model, case)
    view = _InvestmentView(case, inv=inv)

    operations = []
    opex = LinExpr()
    for s, scenario in enumerate(scenarios):
        ops = add_operational_block(model, case, view, np.asarray(scenario.p_load), np.asarray(scenario.q_load),
                                    range(case.n_periods), big_m, cone_cfg, label=f"s{s}")
        operations.append(ops)
        opex = opex + dispatch_cost_expr(case, ops)

    model.set_objective(_capex_expr(case, inv) + _fixed_opex_expr(case, view) + opex / len(scenarios))
    logger.debug(f"Built {model.summary()} for {len(scenarios)} scenario(s)")
    return PlanningModel(instance=model, case=case, big_m=big_m, cone_cfg=cone_cfg,
                         operations=operations, investments=inv, scenarios=list(scenarios))


def build_deterministic(case: NetworkCase, cone_cfg: ConeApproxConfig) -> PlanningModel:
    """Planning MILP for the deterministic (growth-adjusted) loads"""
    p, q = case.period_loads
    return build_main_problem(case, [_Loads(p_load=p, q_load=q)], cone_cfg, name="deterministic")


def build_operational_model(case: NetworkCase, plan: InvestmentPlan, p_load: np.ndarray, q_load: np.ndarray,
                            periods: Sequence[int], cone_cfg: ConeApproxConfig, shedding: bool = False,
                            thermal: ThermalMode = ThermalMode.ENFORCED, name: str = "operation") -> PlanningModel:
    """
    Operational LP for a fixed plan over selected periods (objective left at zero)

    Args:
        case: Planning case
        plan: Investment plan, treated as constants
        p_load, q_load: Loads (n, n_periods)
        periods: Periods to include; they are independent once the plan is fixed
        cone_cfg: Cone approximation accuracy
        shedding: Add shedding variables to the balance rows
        thermal: Line-rating treatment
    """
    if plan.gamma.shape != (case.n, case.n, case.horizon_years):
        raise FormulationError(f"Plan shape {plan.gamma.shape} does not match case "
                               f"({case.n}, {case.n}, {case.horizon_years})")
    big_m = compute_big_m(case)
    model = MilpInstance(name)
    view = _InvestmentView(case, plan=plan)
    ops = add_operational_block(model, case, view, np.asarray(p_load), np.asarray(q_load), list(periods),
                                big_m, cone_cfg, label="o", shedding=shedding, thermal=thermal)
    return PlanningModel(instance=model, case=case, big_m=big_m, cone_cfg=cone_cfg,
                         operations=[ops], fixed_plan=plan)
