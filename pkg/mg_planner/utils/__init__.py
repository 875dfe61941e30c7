"""
Utilities: session logging and artifact writers
"""
from .logger import PlanningLogger, active_logger, cleanup_logger, get_logger
from .reporting import (
    PLAN_SCHEMA, ROBUST_SCHEMA, PlanDocument, RobustDocument, dumps_document, plan_document,
    plan_from_document, round_floats, summary_row, write_document, write_summary
)

__all__ = [
    "PlanningLogger", "active_logger", "cleanup_logger", "get_logger",
    "PLAN_SCHEMA", "ROBUST_SCHEMA", "PlanDocument", "RobustDocument", "dumps_document", "plan_document",
    "plan_from_document", "round_floats", "summary_row", "write_document", "write_summary",
]
