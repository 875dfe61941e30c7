"""
Configuration settings for the microgrid planner
"""
import configparser
import logging
import os
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from ..exceptions import ConfigurationError


logger = logging.getLogger(__name__)


class Backend(Enum):
    HIGHS = "highs"
    CBC = "cbc"


class GenerationAdversary(Enum):
    BILEVEL = "bilevel"  # worst vertex of the least total shedding
    JOINT = "joint"      # shedding at the masked nodes maximised jointly with the dispatch


@dataclass
class SolverSettings:
    """MILP backend settings"""
    backend: Backend = Backend.HIGHS
    mip_gap: float = 1e-6
    time_limit: float = 600.0  # seconds
    threads: int = 1
    verbosity: int = 0
    integrality_tol: float = 1e-6
    feasibility_tol: float = 1e-6
    seed: int = 0


@dataclass
class ConeSettings:
    """Polyhedral cone approximation settings"""
    accuracy_eps: float = 1e-3
    level_cap: int = 12


@dataclass
class RobustSettings:
    """Scenario generation loop settings"""
    tol: float = 1e-6  # problematic threshold, load units
    max_iterations: int = 20
    workers: int = 1
    thermal_directions: int = 8
    max_enumerated_coordinates: int = 12
    generation_adversary: GenerationAdversary = GenerationAdversary.BILEVEL


@dataclass
class ChanceSettings:
    """Chance-constrained box settings"""
    samples: int = 100_000
    seed: int = 0
    blocks: int = 4


@dataclass
class OutputSettings:
    """Artifact and logging settings"""
    out_dir: str = "results"
    log_dir: str = "logs"
    log_level: str = "INFO"
    save_solver_logs: bool = True


# Environment variable -> (section, key)
ENV_OVERRIDES = {
    "MG_PLANNER_BACKEND": ("solver", "backend"),
    "MG_PLANNER_TIME_LIMIT": ("solver", "time_limit"),
    "MG_PLANNER_LOG_LEVEL": ("output", "log_level"),
    "MG_PLANNER_OUT_DIR": ("output", "out_dir"),
}


@dataclass
class Settings:
    """Main configuration class"""
    solver: SolverSettings = field(default_factory=SolverSettings)
    cone: ConeSettings = field(default_factory=ConeSettings)
    robust: RobustSettings = field(default_factory=RobustSettings)
    chance: ChanceSettings = field(default_factory=ChanceSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    @classmethod
    def from_ini(cls, config_file: Optional[str] = None, use_env: bool = True) -> "Settings":
        """
        Load settings from an INI file and the environment

        Args:
            config_file: Path to the INI file (defaults only when None)
            use_env: Apply MG_PLANNER_* environment overrides (after loading .env)

        Returns:
            Validated Settings
        """
        settings = cls()

        if config_file is not None:
            path = Path(config_file)
            if not path.exists():
                raise ConfigurationError(f"Configuration file not found at: {path}")
            parser = configparser.ConfigParser()
            parser.read(path)
            for section in parser.sections():
                for key, raw in parser.items(section):
                    settings.set_value(section, key, raw)

        if use_env:
            load_dotenv()
            for env_name, (section, key) in ENV_OVERRIDES.items():
                raw = os.getenv(env_name)
                if raw is not None and raw.strip():
                    settings.set_value(section, key, raw)

        settings.validate()
        return settings

    def set_value(self, section: str, key: str, raw: str):
        """Set one option from its string form, coercing to the declared type"""
        group = getattr(self, section, None)
        if group is None or not hasattr(group, key):
            logger.warning(f"Ignoring unknown setting [{section}] {key}")
            return

        current = getattr(group, key)
        try:
            if isinstance(current, Enum):
                value = type(current)(raw.strip().lower())
            elif isinstance(current, bool):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw.strip()
        except ValueError as e:
            raise ConfigurationError(f"[{section}] {key}: cannot parse {raw!r} ({e})")

        setattr(group, key, value)

    def validate(self):
        """Check option invariants"""
        s = self.solver
        if s.mip_gap < 0:
            raise ConfigurationError("solver.mip_gap must be >= 0")
        if s.time_limit <= 0:
            raise ConfigurationError("solver.time_limit must be > 0")
        if s.threads < 1:
            raise ConfigurationError("solver.threads must be >= 1")
        if not 0 < s.integrality_tol < 1 or not 0 < s.feasibility_tol < 1:
            raise ConfigurationError("solver tolerances must lie in (0, 1)")

        if not 0 < self.cone.accuracy_eps < 1:
            raise ConfigurationError("cone.accuracy_eps must lie in (0, 1)")
        if self.cone.level_cap < 1:
            raise ConfigurationError("cone.level_cap must be >= 1")

        r = self.robust
        if r.tol < 0:
            raise ConfigurationError("robust.tol must be >= 0")
        if r.max_iterations < 1 or r.workers < 1:
            raise ConfigurationError("robust.max_iterations and robust.workers must be >= 1")
        if r.thermal_directions < 4:
            raise ConfigurationError("robust.thermal_directions must be >= 4")
        if r.max_enumerated_coordinates < 0:
            raise ConfigurationError("robust.max_enumerated_coordinates must be >= 0")

        if self.chance.samples < 1 or self.chance.blocks < 1:
            raise ConfigurationError("chance.samples and chance.blocks must be >= 1")

        if self.output.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ConfigurationError(f"Unknown log level {self.output.log_level}")

    def as_dict(self) -> dict:
        """Flat {section: {key: value}} view for reports"""
        out = {}
        for f in fields(self):
            group = getattr(self, f.name)
            out[f.name] = {
                g.name: (getattr(group, g.name).value if isinstance(getattr(group, g.name), Enum)
                         else getattr(group, g.name))
                for g in fields(group)
            }
        return out
