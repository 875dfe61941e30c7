"""
Domain types and case-document ingestion for microgrid expansion planning
"""
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import CaseValidationError


logger = logging.getLogger(__name__)

CASE_SCHEMA = "mg-planner/case/1"

# Ohm/km -> kOhm/km so that kOhm * A^2 = kW and kOhm * kW = kV^2
IMPEDANCE_SCALE = 1e-3


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class NodeSpec:
    """A future consumption point; loads are (days x periods_per_day), kW / kvar"""
    id: str
    p_load: np.ndarray
    q_load: np.ndarray
    x: Optional[float] = None
    y: Optional[float] = None


@dataclass(frozen=True)
class CostSpec:
    """Investment and operating cost parameters"""
    c_cond: float  # $/km per conductor
    c_pole: float  # $/km, once per corridor
    c_gen: float   # $ per generator
    a: float       # $/h fixed running cost
    b: float       # $/kWh


@dataclass(frozen=True)
class ElectricalSpec:
    """Line and generator technical parameters"""
    r: float            # ohm/km
    x: float            # ohm/km
    v_min: float        # kV
    v_max: float        # kV
    s_rating: float     # kVA per conductor
    p_gen_max: float    # kW
    p_gen_min: float    # kW
    cos_phi_min: float
    max_parallel: int
    theta_delta: float  # rad

    @property
    def r_model(self) -> float:
        """Resistance in kOhm/km"""
        return self.r * IMPEDANCE_SCALE

    @property
    def x_model(self) -> float:
        return self.x * IMPEDANCE_SCALE

    @property
    def tan_phi(self) -> float:
        return math.tan(math.acos(self.cos_phi_min))

    @property
    def tan_theta(self) -> float:
        return math.tan(self.theta_delta)


@dataclass(frozen=True)
class NetworkCase:
    """Immutable planning problem instance"""
    nodes: Tuple[NodeSpec, ...]
    distances: np.ndarray          # km, symmetric
    horizon_years: int
    periods_per_day: int
    growth_rate: float
    scale_factor: np.ndarray       # H per representative day
    cost: CostSpec
    electrical: ElectricalSpec
    discount_rate: float
    name: str = "case"
    uncertainty: Optional[Dict[str, Any]] = None

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def days(self) -> int:
        return int(self.scale_factor.shape[0])

    @property
    def n_periods(self) -> int:
        """Operational periods over the whole horizon (years x days x hours)"""
        return self.horizon_years * self.days * self.periods_per_day

    @property
    def periods_per_year(self) -> int:
        return self.days * self.periods_per_day

    @cached_property
    def edges(self) -> List[Tuple[int, int]]:
        """Candidate corridors: every unordered node pair, i < j"""
        return [(i, j) for i in range(self.n) for j in range(i + 1, self.n)]

    @cached_property
    def arcs(self) -> List[Tuple[int, int]]:
        """Both orientations of every corridor"""
        return [(i, j) for i in range(self.n) for j in range(self.n) if i != j]

    @cached_property
    def period_year(self) -> np.ndarray:
        """0-based year index of each period"""
        return _frozen(np.repeat(np.arange(self.horizon_years), self.periods_per_year))

    @cached_property
    def period_weight(self) -> np.ndarray:
        """Scale factor H applied to the cost of each period"""
        per_year = np.repeat(self.scale_factor, self.periods_per_day)
        return _frozen(np.tile(per_year, self.horizon_years))

    def year_periods(self, year: int) -> range:
        start = year * self.periods_per_year
        return range(start, start + self.periods_per_year)

    @cached_property
    def base_loads(self) -> Tuple[np.ndarray, np.ndarray]:
        """First-year loads, shape (n, days*T)"""
        p = np.array([node.p_load.reshape(-1) for node in self.nodes], dtype=float)
        q = np.array([node.q_load.reshape(-1) for node in self.nodes], dtype=float)
        return _frozen(p.reshape(self.n, -1)), _frozen(q.reshape(self.n, -1))

    @cached_property
    def period_loads(self) -> Tuple[np.ndarray, np.ndarray]:
        """Deterministic loads over the horizon with uniform growth, shape (n, n_periods)"""
        p0, q0 = self.base_loads
        growth = (1.0 + self.growth_rate) ** np.arange(self.horizon_years)
        p = np.concatenate([p0 * g for g in growth], axis=1)
        q = np.concatenate([q0 * g for g in growth], axis=1)
        return _frozen(p), _frozen(q)

    @property
    def max_distance(self) -> float:
        return float(self.distances.max()) if self.n > 1 else 0.0

    @cached_property
    def discount_factors(self) -> np.ndarray:
        """1 / (1+ra)^y for y = 1..Y"""
        years = np.arange(1, self.horizon_years + 1)
        return _frozen(1.0 / (1.0 + self.discount_rate) ** years)


@dataclass(frozen=True)
class InvestmentPlan:
    """Year-indexed investment decisions; arrays are symmetric in (i, j)"""
    gamma: np.ndarray   # (n, n, Y) parallel lines
    omega: np.ndarray   # (n, n, Y) corridor used
    loi: np.ndarray     # (n, n, xi, Y) level indicators, loi[..., k-1, :] == (gamma >= k)
    sigma: np.ndarray   # (n, Y) generator installed

    @property
    def n(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def years(self) -> int:
        return int(self.sigma.shape[1])

    @classmethod
    def from_counts(cls, gamma: np.ndarray, sigma: np.ndarray, max_parallel: int) -> "InvestmentPlan":
        """Derive omega and loi from line counts; gamma may be given on one triangle only"""
        gamma = np.asarray(gamma, dtype=int)
        gamma = np.maximum(gamma, np.transpose(gamma, (1, 0, 2)))
        levels = np.arange(1, max_parallel + 1).reshape(1, 1, -1, 1)
        loi = (gamma[:, :, None, :] >= levels).astype(int)
        omega = (gamma >= 1).astype(int)
        return cls(gamma=_frozen(gamma), omega=_frozen(omega), loi=_frozen(loi),
                   sigma=_frozen(np.asarray(sigma, dtype=int)))

    @classmethod
    def empty(cls, case: NetworkCase) -> "InvestmentPlan":
        n, y = case.n, case.horizon_years
        return cls.from_counts(np.zeros((n, n, y), dtype=int), np.zeros((n, y), dtype=int),
                               case.electrical.max_parallel)

    def invariant_violations(self, max_parallel: int) -> List[str]:
        """Symmetry, bounds, monotonicity over years and level-indicator consistency; empty when well formed"""
        problems = []
        g, w, s = self.gamma, self.omega, self.sigma
        if not np.array_equal(g, np.transpose(g, (1, 0, 2))):
            problems.append("gamma is not symmetric")
        if not np.array_equal(w, np.transpose(w, (1, 0, 2))):
            problems.append("omega is not symmetric")
        if g.min(initial=0) < 0 or g.max(initial=0) > max_parallel:
            problems.append(f"gamma outside [0, {max_parallel}]")
        if np.any(np.diff(g, axis=2) < 0):
            problems.append("gamma decreases over years")
        if np.any(np.diff(s, axis=1) < 0):
            problems.append("sigma decreases over years")
        if not np.isin(s, (0, 1)).all() or not np.isin(w, (0, 1)).all() or not np.isin(self.loi, (0, 1)).all():
            problems.append("binary variables outside {0, 1}")
        if self.loi.shape[2] != max_parallel:
            problems.append("loi level dimension does not match max_parallel")
        else:
            if not np.array_equal(self.loi.sum(axis=2), g):
                problems.append("sum_k loi != gamma")
            if max_parallel >= 1 and not np.array_equal(self.loi[:, :, 0, :], w):
                problems.append("loi level 1 != omega")
            if np.any(np.diff(self.loi, axis=2) > 0):
                problems.append("loi increases with k")
        return problems

    def lines(self, year: int) -> List[Tuple[int, int, int]]:
        """(i, j, gamma) for built corridors with i < j"""
        out = []
        n = self.n
        for i in range(n):
            for j in range(i + 1, n):
                if self.gamma[i, j, year] > 0:
                    out.append((i, j, int(self.gamma[i, j, year])))
        return out

    def generators(self, year: int) -> List[int]:
        return [i for i in range(self.n) if self.sigma[i, year] == 1]


@dataclass
class OperationalState:
    """Per-period dispatch for one scenario; period axis spans the whole horizon"""
    p_gen: np.ndarray    # (n, P)
    q_gen: np.ndarray    # (n, P)
    p_flow: np.ndarray   # (n, n, P) directed
    q_flow: np.ndarray   # (n, n, P) directed
    psi: np.ndarray      # (n, n, P) squared current, symmetric
    nu: np.ndarray       # (n, P) squared voltage, kV^2
    p_shed: np.ndarray   # (n, P)
    q_shed: np.ndarray   # (n, P)

    @classmethod
    def zeros(cls, n: int, periods: int, v_nominal: float = 1.0) -> "OperationalState":
        return cls(
            p_gen=np.zeros((n, periods)), q_gen=np.zeros((n, periods)),
            p_flow=np.zeros((n, n, periods)), q_flow=np.zeros((n, n, periods)),
            psi=np.zeros((n, n, periods)), nu=np.full((n, periods), v_nominal ** 2),
            p_shed=np.zeros((n, periods)), q_shed=np.zeros((n, periods)),
        )


@dataclass(frozen=True)
class MoneyBreakdown:
    """Yearly cash flows and their discounted sum, $"""
    capex_dist: np.ndarray
    capex_gen: np.ndarray
    opex: np.ndarray
    discount_factors: np.ndarray
    npv: float

    @property
    def discounted_capex(self) -> float:
        return float(np.dot(self.discount_factors, self.capex_dist + self.capex_gen))

    @property
    def discounted_opex(self) -> float:
        return float(np.dot(self.discount_factors, self.opex))


# ----------------------------------------------------------------------------
# Case document parsing
# ----------------------------------------------------------------------------

def _require(doc: Dict, key: str, path: str) -> Any:
    if not isinstance(doc, dict):
        raise CaseValidationError(path or "<root>", "expected an object")
    if key not in doc:
        raise CaseValidationError(f"{path}.{key}" if path else key, "missing field")
    return doc[key]


def _number(value: Any, path: str, lo: Optional[float] = None, hi: Optional[float] = None,
            lo_open: bool = False, hi_open: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise CaseValidationError(path, f"expected a finite number, got {value!r}")
    value = float(value)
    if lo is not None and (value < lo or (lo_open and value == lo)):
        raise CaseValidationError(path, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and (value > hi or (hi_open and value == hi)):
        raise CaseValidationError(path, f"must be {'<' if hi_open else '<='} {hi}, got {value}")
    return value


def _integer(value: Any, path: str, lo: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise CaseValidationError(path, f"expected an integer, got {value!r}")
    if value < lo:
        raise CaseValidationError(path, f"must be >= {lo}, got {value}")
    return value


def _profile(value: Any, path: str) -> np.ndarray:
    """A load profile: one day as [T values] or several days as [[T values], ...]"""
    if not isinstance(value, list) or not value:
        raise CaseValidationError(path, "expected a non-empty list of loads")
    days = value if isinstance(value[0], list) else [value]
    rows = []
    for d, day in enumerate(days):
        day_path = f"{path}[{d}]" if day is not value else path
        if not isinstance(day, list) or not day:
            raise CaseValidationError(day_path, "expected a non-empty list of loads")
        rows.append([_number(v, f"{day_path}[{t}]", lo=0.0) for t, v in enumerate(day)])
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CaseValidationError(path, "representative days have different lengths")
    return np.array(rows, dtype=float)


def _parse_cost(doc: Dict) -> CostSpec:
    costs = _require(doc, "costs", "")
    return CostSpec(**{
        key: _number(_require(costs, key, "costs"), f"costs.{key}", lo=0.0)
        for key in ("c_cond", "c_pole", "c_gen", "a", "b")
    })


def _parse_electrical(doc: Dict) -> ElectricalSpec:
    el = _require(doc, "electrical", "")
    p = "electrical"
    r = _number(_require(el, "r", p), f"{p}.r", lo=0.0, lo_open=True)
    x = _number(_require(el, "x", p), f"{p}.x", lo=0.0, lo_open=True)
    v_min = _number(_require(el, "v_min", p), f"{p}.v_min", lo=0.0, lo_open=True)
    v_max = _number(_require(el, "v_max", p), f"{p}.v_max", lo=v_min, lo_open=True)
    s_rating = _number(_require(el, "s_rating", p), f"{p}.s_rating", lo=0.0)
    p_max = _number(_require(el, "p_gen_max", p), f"{p}.p_gen_max", lo=0.0)
    p_min = _number(el.get("p_gen_min", 0.0), f"{p}.p_gen_min", lo=0.0, hi=p_max)
    cos_phi = _number(_require(el, "cos_phi_min", p), f"{p}.cos_phi_min", lo=0.0, hi=1.0, lo_open=True)
    xi = _integer(_require(el, "max_parallel", p), f"{p}.max_parallel", lo=1)
    theta = _number(_require(el, "theta_delta", p), f"{p}.theta_delta",
                    lo=0.0, hi=math.pi / 2, lo_open=True, hi_open=True)
    return ElectricalSpec(r=r, x=x, v_min=v_min, v_max=v_max, s_rating=s_rating,
                          p_gen_max=p_max, p_gen_min=p_min, cos_phi_min=cos_phi,
                          max_parallel=xi, theta_delta=theta)


def _parse_distances(doc: Dict, nodes: List[NodeSpec]) -> np.ndarray:
    n = len(nodes)
    raw = doc.get("distances")
    if raw is None:
        coords = []
        for idx, node in enumerate(nodes):
            if node.x is None or node.y is None:
                raise CaseValidationError(f"nodes[{idx}]", "coordinates required when 'distances' is absent")
            coords.append((node.x, node.y))
        xy = np.array(coords, dtype=float).reshape(n, 2)
        dist = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2))
    else:
        if not isinstance(raw, list) or len(raw) != n:
            raise CaseValidationError("distances", f"expected a {n}x{n} matrix")
        rows = []
        for i, row in enumerate(raw):
            if not isinstance(row, list) or len(row) != n:
                raise CaseValidationError(f"distances[{i}]", f"expected {n} entries")
            rows.append([_number(v, f"distances[{i}][{j}]", lo=0.0) for j, v in enumerate(row)])
        dist = np.array(rows, dtype=float).reshape(n, n)
        for i in range(n):
            for j in range(n):
                if dist[i, j] != dist[j, i]:
                    raise CaseValidationError(f"distances[{i}][{j}]", "matrix is not symmetric")

    for i in range(n):
        if dist[i, i] != 0.0:
            raise CaseValidationError(f"distances[{i}][{i}]", "diagonal must be zero")
        for j in range(n):
            if i != j and not dist[i, j] > 0.0:
                raise CaseValidationError(f"distances[{i}][{j}]", "off-diagonal distances must be > 0")
    return dist


def parse_case(doc: Dict) -> NetworkCase:
    """Validate a decoded case document and build the NetworkCase"""
    if not isinstance(doc, dict):
        raise CaseValidationError("<root>", "expected a JSON object")

    raw_nodes = _require(doc, "nodes", "")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise CaseValidationError("nodes", "expected a non-empty list")

    nodes: List[NodeSpec] = []
    seen = set()
    for idx, raw in enumerate(raw_nodes):
        path = f"nodes[{idx}]"
        node_id = str(_require(raw, "id", path))
        if node_id in seen:
            raise CaseValidationError(f"{path}.id", f"duplicate node id {node_id!r}")
        seen.add(node_id)
        p_load = _profile(_require(raw, "p_load", path), f"{path}.p_load")
        q_load = _profile(_require(raw, "q_load", path), f"{path}.q_load")
        if p_load.shape != q_load.shape:
            raise CaseValidationError(f"{path}.q_load", "shape differs from p_load")
        x = _number(raw["x"], f"{path}.x") if raw.get("x") is not None else None
        y = _number(raw["y"], f"{path}.y") if raw.get("y") is not None else None
        nodes.append(NodeSpec(id=node_id, p_load=_frozen(p_load), q_load=_frozen(q_load), x=x, y=y))

    shapes = {node.p_load.shape for node in nodes}
    if len(shapes) != 1:
        raise CaseValidationError("nodes", "all nodes need the same number of days and periods")
    days, periods = shapes.pop()

    horizon = _require(doc, "horizon", "")
    if isinstance(horizon, dict):
        years = _integer(_require(horizon, "years", "horizon"), "horizon.years", lo=1)
        t_declared = horizon.get("periods_per_day")
        if t_declared is not None and _integer(t_declared, "horizon.periods_per_day", lo=1) != periods:
            raise CaseValidationError("horizon.periods_per_day",
                                      f"declares {t_declared} periods but loads carry {periods}")
    else:
        years = _integer(horizon, "horizon", lo=1)

    raw_h = _require(doc, "scale_factor_H", "")
    if isinstance(raw_h, list):
        if len(raw_h) != days:
            raise CaseValidationError("scale_factor_H", f"expected {days} per-day values")
        scale = np.array([_number(h, f"scale_factor_H[{d}]", lo=0.0, lo_open=True)
                          for d, h in enumerate(raw_h)])
    else:
        scale = np.full(days, _number(raw_h, "scale_factor_H", lo=0.0, lo_open=True))

    growth = _number(doc.get("growth_rate", 0.0), "growth_rate", lo=-1.0, lo_open=True)
    ra = _number(_require(doc, "discount_rate", ""), "discount_rate", lo=0.0, hi=1.0, hi_open=True)

    uncertainty = doc.get("uncertainty")
    if uncertainty is not None and not isinstance(uncertainty, dict):
        raise CaseValidationError("uncertainty", "expected an object")

    case = NetworkCase(
        nodes=tuple(nodes),
        distances=_frozen(_parse_distances(doc, nodes)),
        horizon_years=years,
        periods_per_day=periods,
        growth_rate=growth,
        scale_factor=_frozen(scale),
        cost=_parse_cost(doc),
        electrical=_parse_electrical(doc),
        discount_rate=ra,
        name=str(doc.get("name", "case")),
        uncertainty=uncertainty,
    )
    logger.info(f"Loaded case {case.name!r}: {case.n} nodes, {case.horizon_years} year(s), "
                f"{case.days} day(s) x {case.periods_per_day} periods")
    return case


def load_case(source: Union[IO[bytes], IO[str], bytes, str]) -> NetworkCase:
    """
    Parse and validate a case document

    Args:
        source: Readable stream or raw JSON content

    Returns:
        Validated NetworkCase
    """
    raw = source.read() if hasattr(source, "read") else source
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CaseValidationError("<root>", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    return parse_case(doc)


def case_to_document(case: NetworkCase) -> Dict[str, Any]:
    """Inverse of parse_case (explicit distance matrix, per-day H)"""
    el = case.electrical
    doc = {
        "schema": CASE_SCHEMA,
        "name": case.name,
        "nodes": [
            {
                "id": node.id,
                "x": node.x,
                "y": node.y,
                "p_load": node.p_load.tolist(),
                "q_load": node.q_load.tolist(),
            }
            for node in case.nodes
        ],
        "distances": case.distances.tolist(),
        "costs": {k: getattr(case.cost, k) for k in ("c_cond", "c_pole", "c_gen", "a", "b")},
        "electrical": {
            "r": el.r, "x": el.x, "v_min": el.v_min, "v_max": el.v_max, "s_rating": el.s_rating,
            "p_gen_max": el.p_gen_max, "p_gen_min": el.p_gen_min, "cos_phi_min": el.cos_phi_min,
            "max_parallel": el.max_parallel, "theta_delta": el.theta_delta,
        },
        "horizon": {"years": case.horizon_years, "periods_per_day": case.periods_per_day},
        "growth_rate": case.growth_rate,
        "scale_factor_H": case.scale_factor.tolist(),
        "discount_rate": case.discount_rate,
    }
    if case.uncertainty is not None:
        doc["uncertainty"] = case.uncertainty
    return doc


def with_loads(case: NetworkCase, p_load: Sequence, q_load: Sequence) -> NetworkCase:
    """Copy of the case with replaced first-year loads, shape (n, days*T)"""
    p = np.asarray(p_load, dtype=float).reshape(case.n, case.days, case.periods_per_day)
    q = np.asarray(q_load, dtype=float).reshape(case.n, case.days, case.periods_per_day)
    nodes = tuple(
        NodeSpec(id=node.id, p_load=_frozen(p[i].copy()), q_load=_frozen(q[i].copy()), x=node.x, y=node.y)
        for i, node in enumerate(case.nodes)
    )
    return NetworkCase(nodes=nodes, distances=case.distances, horizon_years=case.horizon_years,
                       periods_per_day=case.periods_per_day, growth_rate=case.growth_rate,
                       scale_factor=case.scale_factor, cost=case.cost, electrical=case.electrical,
                       discount_rate=case.discount_rate, name=case.name, uncertainty=case.uncertainty)
