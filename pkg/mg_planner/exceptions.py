"""
Exception hierarchy for the microgrid planner
"""
from typing import Any, Optional


class PlannerError(Exception):
    """Base class for every error raised by mg_planner"""


class ConfigurationError(PlannerError):
    """Invalid settings or option values"""


class CaseValidationError(PlannerError):
    """A case document violates the schema or a NetworkCase invariant"""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        self.message = message
        super().__init__(f"{field_path}: {message}")


class FormulationError(PlannerError):
    """The model cannot be built from the given inputs"""


class SolverUnavailableError(PlannerError):
    """The configured backend cannot be imported or initialised"""


class SolverBackendError(PlannerError):
    """The backend failed while solving"""


class ExtractionError(PlannerError):
    """A solution violates plan invariants after rounding (formulation bug)"""


class IterationLimitError(PlannerError):
    """The robust loop hit its iteration cap"""

    def __init__(self, message: str, audit: Optional[Any] = None):
        self.audit = audit
        super().__init__(message)


class EnumerationGuardError(PlannerError):
    """A vertex or design enumeration exceeds its size guard"""


class ScenarioFormatError(PlannerError):
    """A plan, scenario or box document cannot be parsed"""


class DimensionError(PlannerError):
    """Plan, dispatch or scenario arrays do not match the case"""
