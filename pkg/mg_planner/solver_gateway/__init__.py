"""
Solver gateway: backend-neutral solve, extraction and polishing
"""
from .gateway import MIP_AVAILABLE, MilpSolution, SolveOptions, SolveStatus, solve
from .extraction import extract, extract_plan, extract_state, polish

__all__ = [
    "MIP_AVAILABLE", "MilpSolution", "SolveOptions", "SolveStatus", "solve",
    "extract", "extract_plan", "extract_state", "polish",
]
