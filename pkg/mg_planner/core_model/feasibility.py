"""
Exact re-evaluation of planning constraints on a candidate solution
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .case import InvestmentPlan, NetworkCase, OperationalState


logger = logging.getLogger(__name__)

# Constraint families whose rows are polyhedral approximations in the model
CONE_FAMILIES = ("current_voltage", "thermal")


@dataclass(frozen=True)
class Tolerances:
    """Acceptance thresholds for check_plan"""
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6
    cone_eps: float = 0.0  # admitted relative cone excess

    def limit(self, scale: np.ndarray) -> np.ndarray:
        return self.abs_tol + self.rel_tol * np.abs(scale)


@dataclass(frozen=True)
class Violation:
    family: str
    index: Tuple
    magnitude: float


@dataclass
class ViolationReport:
    """Hard violations plus the informational current/voltage relaxation gap"""
    violations: List[Violation] = field(default_factory=list)
    relaxation_gap: Dict[Tuple, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def families(self) -> List[str]:
        return sorted({v.family for v in self.violations})

    @property
    def max_relaxation_gap(self) -> float:
        return max(self.relaxation_gap.values(), default=0.0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"family": v.family, "index": str(v.index), "magnitude": v.magnitude} for v in self.violations],
            columns=["family", "index", "magnitude"])


def plan_components(plan: InvestmentPlan, year: int) -> int:
    """Number of connected components of the built network in a year"""
    graph = csr_matrix((plan.omega[:, :, year] > 0).astype(float))
    count, _ = connected_components(graph, directed=False)
    return int(count)


def constraint_residuals(case: NetworkCase, plan: InvestmentPlan, state: OperationalState,
                         p_load: Optional[np.ndarray] = None, q_load: Optional[np.ndarray] = None,
                         cone_eps: float = 0.0) -> Dict[str, List[Tuple[Tuple, float, float]]]:
    """
    Evaluate every constraint family exactly

    Args:
        case: Planning case
        plan: Investment plan
        state: Dispatch over the whole horizon
        p_load, q_load: Scenario loads (n, n_periods); deterministic loads when omitted
        cone_eps: Relative excess admitted on the conic families

    Returns:
        {family: [(index, violation >= 0, scale)]}. 'relaxation_gap' lists
        max(psi*nu - p^2 - q^2, 0), the slack left by relaxing the current/voltage
        equality; the opposite excess p^2 + q^2 > psi*nu is 'current_voltage'
    """
    el = case.electrical
    if p_load is None or q_load is None:
        p_load, q_load = case.period_loads
    n = case.n
    r, x = el.r_model, el.x_model
    tan_phi, tan_th = el.tan_phi, el.tan_theta
    v2_lo, v2_hi = el.v_min ** 2, el.v_max ** 2
    out: Dict[str, List] = {name: [] for name in (
        "plan", "connectivity", "gen_limits", "gen_reactive", "balance_p", "balance_q", "shed_sign",
        "loss_p", "loss_q", "loss_sign", "current_voltage", "voltage_drop", "voltage_bounds",
        "thermal", "angle", "relaxation_gap")}

    for problem in plan.invariant_violations(el.max_parallel):
        out["plan"].append(((problem,), 1.0, 1.0))
    for y in range(case.horizon_years):
        components = plan_components(plan, y)
        if components > 1:
            out["connectivity"].append(((y,), float(components - 1), 1.0))

    for t in range(case.n_periods):
        y = int(case.period_year[t])
        for i in range(n):
            s = plan.sigma[i, y]
            pg, qg = state.p_gen[i, t], state.q_gen[i, t]
            out["gen_limits"].append(((i, t), max(s * el.p_gen_min - pg, pg - s * el.p_gen_max, 0.0),
                                      max(el.p_gen_max, abs(pg))))
            out["gen_reactive"].append(((i, t), max(abs(qg) - tan_phi * pg, 0.0), max(abs(qg), abs(pg))))
            outflow_p = sum(state.p_flow[i, j, t] for j in range(n) if j != i)
            outflow_q = sum(state.q_flow[i, j, t] for j in range(n) if j != i)
            ps, qs = state.p_shed[i, t], state.q_shed[i, t]
            out["balance_p"].append(((i, t), abs(pg - p_load[i, t] + ps - outflow_p),
                                     max(abs(pg), abs(p_load[i, t]), abs(outflow_p))))
            out["balance_q"].append(((i, t), abs(qg - q_load[i, t] + qs - outflow_q),
                                     max(abs(qg), abs(q_load[i, t]), abs(outflow_q))))
            out["shed_sign"].append(((i, t), max(-ps, -qs, 0.0), 1.0))
            nu = state.nu[i, t]
            out["voltage_bounds"].append(((i, t), max(v2_lo - nu, nu - v2_hi, 0.0), v2_hi))

        for (i, j) in case.edges:
            g = int(plan.gamma[i, j, y])
            dist = case.distances[i, j]
            res, rea = r * dist, x * dist
            psi = state.psi[i, j, t]
            p_sum = state.p_flow[i, j, t] + state.p_flow[j, i, t]
            q_sum = state.q_flow[i, j, t] + state.q_flow[j, i, t]
            loss_scale = max(abs(state.p_flow[i, j, t]), abs(state.q_flow[i, j, t]), 1.0)
            out["loss_sign"].append(((i, j, t), max(-p_sum, -q_sum, 0.0), loss_scale))
            if g > 0:
                out["loss_p"].append(((i, j, t), abs(p_sum - res / g * psi), loss_scale))
                out["loss_q"].append(((i, j, t), abs(q_sum - rea / g * psi), loss_scale))

            for (a, b) in ((i, j), (j, i)):
                p, q = state.p_flow[a, b, t], state.q_flow[a, b, t]
                nu_a, nu_b = state.nu[a, t], state.nu[b, t]
                flow_sq = p * p + q * q

                # rotated form sqrt(p^2 + q^2 + v^2) <= u
                u, v = 0.5 * (psi + nu_a), 0.5 * (psi - nu_a)
                excess = math.sqrt(flow_sq + v * v) - (1.0 + cone_eps) * u
                out["current_voltage"].append(((a, b, t), max(excess, 0.0), max(u, 1.0)))
                out["relaxation_gap"].append(((a, b, t), max(psi * nu_a - flow_sq, 0.0), max(flow_sq, 1.0)))

                rating = g * el.s_rating
                over = math.sqrt(flow_sq) - (1.0 + cone_eps) * rating
                out["thermal"].append(((a, b, t), max(flow_sq - rating ** 2, 0.0) if over > 0 else 0.0,
                                       max(rating ** 2, 1.0)))

                if g > 0:
                    drop = nu_b - nu_a + 2.0 * (res / g * p + rea / g * q) - (res ** 2 + rea ** 2) / g ** 2 * psi
                    out["voltage_drop"].append(((a, b, t), abs(drop), v2_hi))
                rhs = tan_th * nu_a * g
                lhs_1 = res * (q + tan_th * p) + rea * (tan_th * q - p)
                lhs_2 = rea * (p + tan_th * q) + res * (tan_th * p - q)
                out["angle"].append(((a, b, t), max(lhs_1 - rhs, lhs_2 - rhs, 0.0), max(abs(rhs), v2_hi)))
    return out


def check_plan(case: NetworkCase, plan: InvestmentPlan, ops: OperationalState,
               tolerances: Optional[Tolerances] = None,
               p_load: Optional[np.ndarray] = None, q_load: Optional[np.ndarray] = None) -> ViolationReport:
    """
    Report constraint violations of a plan and its dispatch

    Args:
        case: Planning case
        plan: Investment plan
        ops: Dispatch over the whole horizon
        tolerances: Acceptance thresholds (defaults: 1e-6 absolute and relative, exact cones)
        p_load, q_load: Scenario loads; deterministic loads when omitted

    Returns:
        ViolationReport, empty violation list iff the solution is feasible
    """
    tol = tolerances or Tolerances()
    residuals = constraint_residuals(case, plan, ops, p_load, q_load, cone_eps=tol.cone_eps)
    report = ViolationReport()
    for family, entries in residuals.items():
        if family == "relaxation_gap":
            report.relaxation_gap = {index: value for index, value, _ in entries if value > 0}
            continue
        for index, value, scale in entries:
            if family in ("plan", "connectivity"):
                if value > 0:
                    report.violations.append(Violation(family, index, value))
            elif value > tol.abs_tol + tol.rel_tol * scale:
                report.violations.append(Violation(family, index, float(value)))

    if report.violations:
        logger.debug(f"check_plan: {len(report.violations)} violation(s) in {report.families()}")
    return report
