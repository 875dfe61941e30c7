"""
Chance-constrained load boxes
"""
from .chance_box import Family, LoadDistribution, box_mass, chance_box, verify_coverage

__all__ = ["Family", "LoadDistribution", "box_mass", "chance_box", "verify_coverage"]
