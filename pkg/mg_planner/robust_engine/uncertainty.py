"""
Uncertainty box, scenarios, target masks and robust-loop results
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from ..core_model.case import InvestmentPlan, MoneyBreakdown, NetworkCase, OperationalState
from ..exceptions import ConfigurationError, ScenarioFormatError
from ..utils.reporting import round_floats


logger = logging.getLogger(__name__)

SCENARIO_SCHEMA = "mg-planner/scenario/1"
BOX_SCHEMA = "mg-planner/box/1"
FINGERPRINT_DIGITS = 9


class ScenarioOrigin(Enum):
    DETERMINISTIC = "deterministic"
    GENERATION_ADVERSARY = "generation_adversary"
    THERMAL_ADVERSARY = "thermal_adversary"


def _readonly(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


def scenario_fingerprint(p_load: np.ndarray, q_load: np.ndarray) -> str:
    """Hash of the loads rounded to 1e-9 (shape included)"""
    digest = hashlib.sha256()
    for array in (p_load, q_load):
        canonical = np.round(np.asarray(array, dtype=float), FINGERPRINT_DIGITS) + 0.0
        digest.update(str(canonical.shape).encode())
        digest.update(np.ascontiguousarray(canonical, dtype="<f8").tobytes())
    return digest.hexdigest()[:32]


@dataclass(frozen=True)
class Scenario:
    """One load realisation over the horizon, shape (n, n_periods)"""
    p_load: np.ndarray
    q_load: np.ndarray
    origin: ScenarioOrigin = ScenarioOrigin.DETERMINISTIC
    residual: float = 0.0
    fingerprint: str = field(init=False)

    def __post_init__(self):
        p, q = _readonly(self.p_load), _readonly(self.q_load)
        if p.shape != q.shape or p.ndim != 2:
            raise ScenarioFormatError(f"Scenario loads must be two equal matrices, got {p.shape} and {q.shape}")
        object.__setattr__(self, "p_load", p)
        object.__setattr__(self, "q_load", q)
        object.__setattr__(self, "fingerprint", scenario_fingerprint(p, q))

    @classmethod
    def deterministic(cls, case: NetworkCase) -> "Scenario":
        p, q = case.period_loads
        return cls(p_load=p, q_load=q, origin=ScenarioOrigin.DETERMINISTIC)

    def with_residual(self, residual: float) -> "Scenario":
        return Scenario(p_load=self.p_load, q_load=self.q_load, origin=self.origin, residual=residual)


@dataclass(frozen=True)
class UncertaintyBox:
    """Rectangular load uncertainty set, bounds of shape (n, n_periods)"""
    p_lo: np.ndarray
    p_hi: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray

    def __post_init__(self):
        arrays = [_readonly(getattr(self, name)) for name in ("p_lo", "p_hi", "q_lo", "q_hi")]
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1 or arrays[0].ndim != 2:
            raise ScenarioFormatError(f"Box bounds must be equal-shaped matrices, got {sorted(shapes)}")
        for name, array in zip(("p_lo", "p_hi", "q_lo", "q_hi"), arrays):
            object.__setattr__(self, name, array)
        if np.any(self.p_lo > self.p_hi) or np.any(self.q_lo > self.q_hi):
            raise ScenarioFormatError("Box lower bounds exceed upper bounds")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.p_lo.shape

    @classmethod
    def from_factors(cls, case: NetworkCase, lower: float, upper: float) -> "UncertaintyBox":
        """[lower * load, upper * load] around the deterministic loads"""
        if not 0.0 <= lower <= 1.0 <= upper:
            raise ConfigurationError(f"Load factors must satisfy 0 <= lb <= 1 <= ub, got {lower} and {upper}")
        p, q = case.period_loads
        return cls(p_lo=lower * p, p_hi=upper * p, q_lo=lower * q, q_hi=upper * q)

    @classmethod
    def point(cls, case: NetworkCase) -> "UncertaintyBox":
        return cls.from_factors(case, 1.0, 1.0)

    def check_case(self, case: NetworkCase, tol: float = 1e-9):
        """The box must match the case and contain its deterministic loads"""
        if self.shape != (case.n, case.n_periods):
            raise ScenarioFormatError(f"Box shape {self.shape} does not match case ({case.n}, {case.n_periods})")
        p, q = case.period_loads
        if not self.contains(p, q, tol):
            raise ScenarioFormatError("Deterministic loads lie outside the uncertainty box")

    def contains(self, p_load: np.ndarray, q_load: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(p_load >= self.p_lo - tol) and np.all(p_load <= self.p_hi + tol)
                    and np.all(q_load >= self.q_lo - tol) and np.all(q_load <= self.q_hi + tol))

    def is_vertex(self, scenario: Scenario, tol: float = 1e-6) -> bool:
        """Every coordinate sits on one of its bounds"""
        at_p = (np.abs(scenario.p_load - self.p_lo) <= tol) | (np.abs(scenario.p_load - self.p_hi) <= tol)
        at_q = (np.abs(scenario.q_load - self.q_lo) <= tol) | (np.abs(scenario.q_load - self.q_hi) <= tol)
        return bool(at_p.all() and at_q.all())

    def uncertain_coordinates(self, periods: Optional[Iterable[int]] = None,
                              nodes: Optional[Iterable[int]] = None) -> List[Tuple[str, int, int]]:
        """Non-degenerate coordinates as ('p'|'q', node, period), in canonical order"""
        n, P = self.shape
        periods = range(P) if periods is None else sorted(set(periods))
        nodes = range(n) if nodes is None else sorted(set(nodes))
        coords = []
        for t in periods:
            for i in nodes:
                if self.p_hi[i, t] > self.p_lo[i, t]:
                    coords.append(("p", i, t))
                if self.q_hi[i, t] > self.q_lo[i, t]:
                    coords.append(("q", i, t))
        return coords

    def upper(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array(self.p_hi), np.array(self.q_hi)

    def vertex(self, coords: Sequence[Tuple[str, int, int]], high: Sequence[bool],
               base: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Loads with the listed coordinates at their lower/upper bound; others from base (default upper)"""
        p, q = (np.array(base[0]), np.array(base[1])) if base is not None else self.upper()
        for (kind, i, t), up in zip(coords, high):
            if kind == "p":
                p[i, t] = self.p_hi[i, t] if up else self.p_lo[i, t]
            else:
                q[i, t] = self.q_hi[i, t] if up else self.q_lo[i, t]
        return p, q


@dataclass(frozen=True)
class TargetMask:
    """Generation entries (i, t) or thermal entries (i, j, t) targeted by an adversary"""
    kind: str
    entries: FrozenSet[Tuple[int, ...]]

    def __post_init__(self):
        if self.kind not in ("generation", "thermal"):
            raise ValueError(f"Unknown mask kind {self.kind!r}")
        if not self.entries:
            raise ValueError("A target mask needs at least one entry")
        width = 2 if self.kind == "generation" else 3
        if any(len(entry) != width for entry in self.entries):
            raise ValueError(f"{self.kind} mask entries must have {width} indices")

    @classmethod
    def generation(cls, entries: Iterable[Tuple[int, int]]) -> "TargetMask":
        return cls("generation", frozenset(tuple(int(v) for v in e) for e in entries))

    @classmethod
    def thermal(cls, entries: Iterable[Tuple[int, int, int]]) -> "TargetMask":
        return cls("thermal", frozenset(tuple(int(v) for v in e) for e in entries))

    @property
    def periods(self) -> List[int]:
        return sorted({entry[-1] for entry in self.entries})

    def sorted_entries(self) -> List[Tuple[int, ...]]:
        return sorted(self.entries)


@dataclass
class IterationAudit:
    """One pass of the robust loop"""
    iteration: int
    main_objective: float
    capex: float
    opex: float
    scenarios_total: int
    added_generation: int = 0
    added_thermal: int = 0
    generation_objectives: List[float] = field(default_factory=list)
    thermal_objectives: List[float] = field(default_factory=list)
    subproblems: int = 0
    wall_time: float = 0.0
    objective_decrease: float = 0.0  # drop below the previous main objective, 0 when none


@dataclass
class RobustResult:
    """Plan protected against every scenario in its set, with the loop audit"""
    plan: InvestmentPlan
    scenarios: List[Scenario]
    iterations: int
    audit: List[IterationAudit]
    money: MoneyBreakdown
    states: List[OperationalState] = field(default_factory=list)
    gap: float = 0.0

    @property
    def objective(self) -> float:
        return self.money.npv

    @property
    def objective_monotone(self) -> bool:
        return all(a.objective_decrease == 0.0 for a in self.audit)


# ----------------------------------------------------------------------------
# Scenario-set dump / restore (one JSON record per line)
# ----------------------------------------------------------------------------

@dataclass_json
@dataclass
class ScenarioRecord:
    schema: str
    origin: str
    fingerprint: str
    residual: Optional[float]
    p_load: List[List[float]]
    q_load: List[List[float]]


@dataclass_json
@dataclass
class BoxRecord:
    schema: str
    p_lo: List[List[float]]
    p_hi: List[List[float]]
    q_lo: List[List[float]]
    q_hi: List[List[float]]


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def dump_scenarios(scenarios: Sequence[Scenario], stream: IO[str]):
    """Write one record per scenario (origin, loads, corrective residual)"""
    for scenario in scenarios:
        record = ScenarioRecord(schema=SCENARIO_SCHEMA, origin=scenario.origin.value,
                                fingerprint=scenario.fingerprint, residual=_finite_or_none(scenario.residual),
                                p_load=scenario.p_load.tolist(), q_load=scenario.q_load.tolist())
        stream.write(json.dumps(round_floats(record.to_dict()), sort_keys=True) + "\n")


def restore_scenarios(stream: IO[str], case: Optional[NetworkCase] = None) -> List[Scenario]:
    """Read a scenario dump; shapes are checked against the case when given"""
    scenarios = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = ScenarioRecord.from_dict(json.loads(line))
            origin = ScenarioOrigin(record.origin)
        except (ValueError, KeyError, TypeError) as e:
            raise ScenarioFormatError(f"scenarios line {lineno}: {str(e)}") from e
        if record.schema != SCENARIO_SCHEMA:
            raise ScenarioFormatError(f"scenarios line {lineno}: unsupported schema {record.schema!r}")
        residual = np.inf if record.residual is None else float(record.residual)
        scenario = Scenario(p_load=np.array(record.p_load, dtype=float), q_load=np.array(record.q_load, dtype=float),
                            origin=origin, residual=residual)
        if case is not None and scenario.p_load.shape != (case.n, case.n_periods):
            raise ScenarioFormatError(f"scenarios line {lineno}: shape {scenario.p_load.shape} does not match "
                                      f"case ({case.n}, {case.n_periods})")
        if record.fingerprint and record.fingerprint != scenario.fingerprint:
            logger.warning(f"scenarios line {lineno}: fingerprint changed after rounding; using the recomputed one")
        scenarios.append(scenario)
    return scenarios


def dump_box(box: UncertaintyBox, stream: IO[str]):
    record = BoxRecord(schema=BOX_SCHEMA, p_lo=box.p_lo.tolist(), p_hi=box.p_hi.tolist(),
                       q_lo=box.q_lo.tolist(), q_hi=box.q_hi.tolist())
    stream.write(json.dumps(round_floats(record.to_dict()), sort_keys=True) + "\n")


def restore_box(stream: IO[str]) -> UncertaintyBox:
    try:
        record = BoxRecord.from_dict(json.loads(stream.readline()))
    except (ValueError, KeyError, TypeError) as e:
        raise ScenarioFormatError(f"box record: {str(e)}") from e
    if record.schema != BOX_SCHEMA:
        raise ScenarioFormatError(f"box record: unsupported schema {record.schema!r}")
    return UncertaintyBox(p_lo=record.p_lo, p_hi=record.p_hi, q_lo=record.q_lo, q_hi=record.q_hi)
