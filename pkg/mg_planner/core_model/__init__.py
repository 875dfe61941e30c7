"""
Domain types, case ingestion, NPV accounting and feasibility checks
"""
from .case import (
    CASE_SCHEMA, CostSpec, ElectricalSpec, InvestmentPlan, MoneyBreakdown, NetworkCase,
    NodeSpec, OperationalState, case_to_document, load_case, parse_case, with_loads
)
from .economics import npv
from .feasibility import (
    Tolerances, Violation, ViolationReport, check_plan, constraint_residuals, plan_components
)

__all__ = [
    "CASE_SCHEMA", "CostSpec", "ElectricalSpec", "InvestmentPlan", "MoneyBreakdown", "NetworkCase",
    "NodeSpec", "OperationalState", "case_to_document", "load_case", "parse_case", "with_loads",
    "npv", "Tolerances", "Violation", "ViolationReport", "check_plan", "constraint_residuals",
    "plan_components",
]
