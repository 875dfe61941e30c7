"""
Big-M constants for the loss and voltage-drop rows
"""
from dataclasses import dataclass

from ..core_model.case import NetworkCase


@dataclass(frozen=True)
class BigMSet:
    """Constants deactivating the per-level loss and voltage-drop rows"""
    M1: float
    M2: float
    psi_max: float


def model_impedance(case: NetworkCase):
    """Line resistance and reactance per km in model units (kOhm/km)"""
    return case.electrical.r_model, case.electrical.x_model


def compute_big_m(case: NetworkCase, r: float = None, x: float = None) -> BigMSet:
    """
    Worst-case constants implied by the voltage and thermal bounds

    Args:
        case: Planning case
        r, x: Impedance per km in model units; derived from the case when omitted

    Returns:
        BigMSet with psi_max = (xi*S)^2 / v_min^2
    """
    el = case.electrical
    if r is None or x is None:
        r, x = model_impedance(case)
    d_max = case.max_distance
    flow_cap = el.max_parallel * el.s_rating
    psi_max = flow_cap ** 2 / el.v_min ** 2
    m1 = 2.0 * flow_cap + r * d_max * psi_max
    m2 = ((el.v_max ** 2 - el.v_min ** 2) + 2.0 * d_max * (r + x) * flow_cap
          + d_max ** 2 * (r ** 2 + x ** 2) * psi_max)
    return BigMSet(M1=m1, M2=m2, psi_max=psi_max)
