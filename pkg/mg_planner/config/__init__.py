"""Configuration module"""
from .settings import (
    Settings, Backend, GenerationAdversary, SolverSettings, ConeSettings, RobustSettings,
    ChanceSettings, OutputSettings
)

__all__ = [
    "Settings", "Backend", "GenerationAdversary", "SolverSettings", "ConeSettings", "RobustSettings",
    "ChanceSettings", "OutputSettings"
]
