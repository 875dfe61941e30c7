"""
Planning model construction: MILP container, cone approximation, big-M constants
"""
from .big_m import BigMSet, compute_big_m, model_impedance
from .cones import (
    ConeApproxConfig, ConeBlock, approximate_cone, approximate_rotated_cone, level_error, levels_for
)
from .milp import LinExpr, MilpInstance, Sense, VarKind
from .planning_model import (
    ABSENT, InvestmentVars, OperationalVars, PlanningModel, ThermalMode, add_operational_block,
    build_deterministic, build_main_problem, build_operational_model, dispatch_cost_expr
)

__all__ = [
    "BigMSet", "compute_big_m", "model_impedance",
    "ConeApproxConfig", "ConeBlock", "approximate_cone", "approximate_rotated_cone", "level_error", "levels_for",
    "LinExpr", "MilpInstance", "Sense", "VarKind",
    "ABSENT", "InvestmentVars", "OperationalVars", "PlanningModel", "ThermalMode", "add_operational_block",
    "build_deterministic", "build_main_problem", "build_operational_model", "dispatch_cost_expr",
]
