"""
Net present value accounting
"""
import logging
from typing import Sequence, Union

import numpy as np

from ..exceptions import DimensionError
from .case import InvestmentPlan, MoneyBreakdown, NetworkCase, OperationalState


logger = logging.getLogger(__name__)


def _check_dimensions(case: NetworkCase, plan: InvestmentPlan, states: Sequence[OperationalState]):
    n, Y, xi = case.n, case.horizon_years, case.electrical.max_parallel
    if plan.gamma.shape != (n, n, Y) or plan.omega.shape != (n, n, Y):
        raise DimensionError(f"Plan line arrays have shape {plan.gamma.shape}, expected {(n, n, Y)}")
    if plan.sigma.shape != (n, Y):
        raise DimensionError(f"Plan generator array has shape {plan.sigma.shape}, expected {(n, Y)}")
    if plan.loi.shape != (n, n, xi, Y):
        raise DimensionError(f"Plan level array has shape {plan.loi.shape}, expected {(n, n, xi, Y)}")
    for s, state in enumerate(states):
        if state.p_gen.shape != (n, case.n_periods):
            raise DimensionError(f"Dispatch {s} has shape {state.p_gen.shape}, expected {(n, case.n_periods)}")


def npv(case: NetworkCase, plan: InvestmentPlan,
        ops: Union[OperationalState, Sequence[OperationalState]]) -> MoneyBreakdown:
    """
    Yearly CAPEX/OPEX and their discounted sum

    Args:
        case: Planning case
        plan: Investment plan
        ops: Dispatch over the whole horizon; several equiprobable scenarios are averaged

    Returns:
        MoneyBreakdown
    """
    states = [ops] if isinstance(ops, OperationalState) else list(ops)
    _check_dimensions(case, plan, states)
    cost = case.cost
    Y = case.horizon_years

    iu = np.triu_indices(case.n, k=1)
    dist = case.distances[iu]
    zeros_lines = np.zeros((len(dist), 1))
    gamma = np.concatenate([zeros_lines, plan.gamma[iu].reshape(len(dist), Y)], axis=1)
    omega = np.concatenate([zeros_lines, plan.omega[iu].reshape(len(dist), Y)], axis=1)
    sigma = np.concatenate([np.zeros((case.n, 1)), plan.sigma], axis=1)

    capex_dist = (dist[:, None] * (cost.c_cond * np.diff(gamma, axis=1)
                                   + cost.c_pole * np.diff(omega, axis=1))).sum(axis=0)
    capex_gen = cost.c_gen * np.diff(sigma, axis=1).sum(axis=0)

    weight = case.period_weight
    opex = np.zeros(Y)
    for y in range(Y):
        periods = np.asarray(case.year_periods(y))
        running = cost.a * plan.sigma[:, y].sum() * weight[periods].sum()
        fuel = np.mean([cost.b * (state.p_gen[:, periods].sum(axis=0) * weight[periods]).sum()
                        for state in states]) if states else 0.0
        opex[y] = running + fuel

    df = case.discount_factors
    total = float(np.dot(df, capex_dist + capex_gen + opex))
    return MoneyBreakdown(capex_dist=capex_dist, capex_gen=capex_gen, opex=opex,
                          discount_factors=np.asarray(df), npv=total)
