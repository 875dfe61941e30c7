"""
Robust planning: uncertainty box, adversarial/corrective subproblems, scenario loop
"""
from .uncertainty import (
    IterationAudit, RobustResult, Scenario, ScenarioOrigin, TargetMask, UncertaintyBox,
    dump_box, dump_scenarios, restore_box, restore_scenarios, scenario_fingerprint
)
from .subproblems import (
    AdversaryResult, SubproblemContext, adversarial_generation, adversarial_thermal,
    corrective_generation, corrective_thermal, operate
)
from .scenario_generator import SweepReport, adversary_sweep, robust_plan, run_sweep

__all__ = [
    "IterationAudit", "RobustResult", "Scenario", "ScenarioOrigin", "TargetMask", "UncertaintyBox",
    "dump_box", "dump_scenarios", "restore_box", "restore_scenarios", "scenario_fingerprint",
    "AdversaryResult", "SubproblemContext", "adversarial_generation", "adversarial_thermal",
    "corrective_generation", "corrective_thermal", "operate",
    "SweepReport", "adversary_sweep", "robust_plan", "run_sweep",
]
