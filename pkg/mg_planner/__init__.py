"""
mg_planner - microgrid expansion planning with robust load scenarios
"""
from .config.settings import Settings
from .core_model.case import InvestmentPlan, NetworkCase, OperationalState, load_case
from .core_model.economics import npv
from .core_model.feasibility import check_plan
from .exceptions import PlannerError
from .formulation.cones import ConeApproxConfig
from .formulation.planning_model import build_deterministic, build_main_problem
from .robust_engine import Scenario, UncertaintyBox, robust_plan
from .solver_gateway import SolveOptions, extract, solve

__version__ = "1.0.0"

__all__ = [
    "Settings", "InvestmentPlan", "NetworkCase", "OperationalState", "load_case", "npv", "check_plan",
    "PlannerError", "ConeApproxConfig", "build_deterministic", "build_main_problem",
    "Scenario", "UncertaintyBox", "robust_plan", "SolveOptions", "extract", "solve",
]
