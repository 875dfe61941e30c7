"""
Brute-force reference implementations for small instances
"""
from .constraint_eval import evaluate_constraints
from .enumeration import (
    DesignOptimum, enumerate_designs, enumerate_vertex_adversary, solve_exact_operation, vertex_residuals
)

__all__ = [
    "evaluate_constraints", "DesignOptimum", "enumerate_designs", "enumerate_vertex_adversary",
    "solve_exact_operation", "vertex_residuals",
]
