"""
Residual table of every constraint family

Evaluated directly from the dispatch arrays, vectorised over arcs and periods,
without going through core_model.feasibility, so the two checkers can be held
against each other. Cones are exact; `tolerances.cone_eps` sets the relative
excess admitted before a conic row counts as violated.
"""
import logging
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..core_model.case import InvestmentPlan, NetworkCase, OperationalState
from ..core_model.feasibility import Tolerances
from ..robust_engine.uncertainty import Scenario


logger = logging.getLogger(__name__)

COLUMNS = ["family", "index", "residual", "scale", "hard", "violated"]

# psi * nu - (p^2 + q^2): how loose the relaxed current/voltage equality is
INFORMATIONAL = ("relaxation_gap",)


class _Table:
    def __init__(self, tol: Tolerances):
        self.tol = tol
        self.rows: List[dict] = []

    def add(self, family: str, index: tuple, residual: float, scale: float, counted: bool = False):
        hard = family not in INFORMATIONAL
        if counted:
            violated = residual > 0
        else:
            violated = hard and residual > self.tol.abs_tol + self.tol.rel_tol * scale
        self.rows.append({"family": family, "index": index, "residual": float(residual), "scale": float(scale),
                          "hard": hard, "violated": bool(violated)})

    def add_block(self, family: str, residual: np.ndarray, scale: np.ndarray, labels: List[tuple]):
        """residual and scale of shape (len(labels), n_periods)"""
        for k, label in enumerate(labels):
            for t in range(residual.shape[1]):
                self.add(family, (*label, t), residual[k, t], scale[k, t])


def evaluate_constraints(case: NetworkCase, plan: InvestmentPlan, state: OperationalState,
                         scenario: Optional[Scenario] = None,
                         tolerances: Optional[Tolerances] = None) -> pd.DataFrame:
    """
    One row per constraint instance with its residual

    Args:
        case: Planning case
        plan: Investment plan
        state: Dispatch over the whole horizon
        scenario: Loads to check against; deterministic loads when omitted
        tolerances: Thresholds used for the 'violated' column

    Returns:
        DataFrame with columns family, index, residual, scale, hard, violated.
        Conic residuals are in the units of the cone radius (kVA for thermal).
    """
    tol = tolerances or Tolerances()
    eps = tol.cone_eps
    el = case.electrical
    n = case.n
    p_load, q_load = case.period_loads if scenario is None else (scenario.p_load, scenario.q_load)
    years = np.asarray(case.period_year)
    table = _Table(tol)

    for problem in plan.invariant_violations(el.max_parallel):
        table.add("plan", (problem,), 1.0, 1.0, counted=True)
    for y in range(case.horizon_years):
        count, _ = connected_components(csr_matrix(np.asarray(plan.gamma[:, :, y] > 0, dtype=float)),
                                        directed=False)
        if count > 1:
            table.add("connectivity", (y,), float(count - 1), 1.0, counted=True)

    # nodes, shape (n, P)
    sigma = np.asarray(plan.sigma)[:, years]
    pg, qg, nu = state.p_gen, state.q_gen, state.nu
    ps, qs = state.p_shed, state.q_shed
    out_p = state.p_flow.sum(axis=1) - np.einsum("iit->it", state.p_flow)
    out_q = state.q_flow.sum(axis=1) - np.einsum("iit->it", state.q_flow)
    nodes = [(i,) for i in range(n)]
    v2_lo, v2_hi = el.v_min ** 2, el.v_max ** 2
    table.add_block("balance_p", np.abs(pg - p_load + ps - out_p),
                    np.maximum.reduce([np.abs(pg), np.abs(p_load), np.abs(out_p)]), nodes)
    table.add_block("balance_q", np.abs(qg - q_load + qs - out_q),
                    np.maximum.reduce([np.abs(qg), np.abs(q_load), np.abs(out_q)]), nodes)
    table.add_block("gen_limits", np.maximum.reduce([sigma * el.p_gen_min - pg, pg - sigma * el.p_gen_max,
                                                     np.zeros_like(pg)]),
                    np.maximum(el.p_gen_max, np.abs(pg)), nodes)
    table.add_block("gen_reactive", np.maximum(np.abs(qg) - el.tan_phi * pg, 0.0),
                    np.maximum(np.abs(qg), np.abs(pg)), nodes)
    table.add_block("shed_sign", np.maximum(np.maximum(-ps, -qs), 0.0), np.ones_like(ps), nodes)
    table.add_block("voltage_bounds", np.maximum(np.maximum(v2_lo - nu, nu - v2_hi), 0.0),
                    np.full_like(nu, v2_hi), nodes)

    # arcs, shape (A, P)
    arcs = case.arcs
    a_idx = np.array([a for a, _ in arcs])
    b_idx = np.array([b for _, b in arcs])
    labels = [tuple(arc) for arc in arcs]
    gamma = np.asarray(plan.gamma)[a_idx, b_idx][:, years].astype(float)
    dist = np.asarray(case.distances)[a_idx, b_idx][:, None]
    built = gamma > 0
    g = np.where(built, gamma, 1.0)
    res, rea = el.r_model * dist / g, el.x_model * dist / g
    p, q = state.p_flow[a_idx, b_idx], state.q_flow[a_idx, b_idx]
    p_back, q_back = state.p_flow[b_idx, a_idx], state.q_flow[b_idx, a_idx]
    psi = state.psi[a_idx, b_idx]
    nu_a, nu_b = nu[a_idx], nu[b_idx]
    flow = np.hypot(p, q)

    # ||(2p, 2q, psi - nu)|| <= psi + nu, halved to the units of (psi + nu) / 2
    norm = np.sqrt(4.0 * p ** 2 + 4.0 * q ** 2 + (psi - nu_a) ** 2)
    table.add_block("current_voltage", np.maximum(0.5 * norm - 0.5 * (1.0 + eps) * (psi + nu_a), 0.0),
                    np.maximum(0.5 * (psi + nu_a), 1.0), labels)
    table.add_block("relaxation_gap", np.maximum(psi * nu_a - flow ** 2, 0.0), np.maximum(flow ** 2, 1.0), labels)

    rating = gamma * el.s_rating
    table.add_block("thermal", np.maximum(flow - (1.0 + eps) * rating, 0.0), np.maximum(rating, 1.0), labels)

    drop = nu_b - nu_a + 2.0 * (res * p + rea * q) - (res ** 2 + rea ** 2) * psi
    loss_scale = np.maximum.reduce([np.abs(p), np.abs(q), np.ones_like(p)])
    loss_p, loss_q = p + p_back - res * psi, q + q_back - rea * psi
    upper = {k for k, (a, b) in enumerate(arcs) if a < b}
    for k in range(len(arcs)):
        a, b = arcs[k]
        for t in range(len(years)):
            if k in upper:
                table.add("loss_sign", (a, b, t), max(-(p[k, t] + p_back[k, t]), -(q[k, t] + q_back[k, t]), 0.0),
                          loss_scale[k, t])
                if built[k, t]:
                    table.add("loss_p", (a, b, t), abs(loss_p[k, t]), loss_scale[k, t])
                    table.add("loss_q", (a, b, t), abs(loss_q[k, t]), loss_scale[k, t])
            if built[k, t]:
                table.add("voltage_drop", (a, b, t), abs(drop[k, t]), v2_hi)

    # angle rows use the single-line impedance and tan(theta) * gamma * nu
    tan_th = el.tan_theta
    R, X = el.r_model * dist, el.x_model * dist
    rhs = tan_th * nu_a * gamma
    lhs_1 = R * (q + tan_th * p) + X * (tan_th * q - p)
    lhs_2 = X * (p + tan_th * q) + R * (tan_th * p - q)
    table.add_block("angle", np.maximum(np.maximum(lhs_1, lhs_2) - rhs, 0.0),
                    np.maximum(np.abs(rhs), v2_hi), labels)

    frame = pd.DataFrame(table.rows, columns=COLUMNS)
    logger.debug(f"Constraint table: {len(frame)} rows, {int(frame['violated'].sum())} violated")
    return frame
