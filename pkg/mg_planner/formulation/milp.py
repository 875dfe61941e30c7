"""
Backend-neutral mixed-integer linear model
"""
import copy
import logging
import math
from enum import Enum
from typing import IO, Dict, Hashable, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from ..exceptions import FormulationError


logger = logging.getLogger(__name__)

Number = Union[int, float]


class VarKind(Enum):
    CONTINUOUS = "C"
    BINARY = "B"
    INTEGER = "I"


class Sense(Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class LinExpr:
    """Sparse affine expression sum(coef * x[var]) + const over variable ids"""

    __slots__ = ("terms", "const")
    __array_ufunc__ = None  # numpy scalars defer to the reflected operators

    def __init__(self, terms: Optional[Dict[int, float]] = None, const: float = 0.0):
        self.terms: Dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def var(cls, idx: int, coef: float = 1.0) -> "LinExpr":
        return cls({int(idx): float(coef)})

    @classmethod
    def lift(cls, value: Union["LinExpr", Number]) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        return cls(const=float(value))

    @classmethod
    def total(cls, items: Iterable[Union["LinExpr", Number]]) -> "LinExpr":
        out = cls()
        for item in items:
            out._iadd(item, 1.0)
        return out

    @property
    def is_constant(self) -> bool:
        return not any(self.terms.values())

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def _iadd(self, other: Union["LinExpr", Number], scale: float) -> "LinExpr":
        if isinstance(other, LinExpr):
            for k, v in other.terms.items():
                self.terms[k] = self.terms.get(k, 0.0) + scale * v
            self.const += scale * other.const
        else:
            self.const += scale * float(other)
        return self

    def __add__(self, other):
        return self.copy()._iadd(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self)._iadd(other, 1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar: Number):
        if isinstance(scalar, LinExpr):
            raise TypeError("LinExpr products are not linear")
        s = float(scalar)
        return LinExpr({k: s * v for k, v in self.terms.items()}, s * self.const)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Number):
        return self * (1.0 / float(scalar))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def __repr__(self):
        body = " + ".join(f"{v:g}*x{k}" for k, v in sorted(self.terms.items()))
        return f"LinExpr({body or '0'} + {self.const:g})"


ExprLike = Union[LinExpr, Number]


class MilpInstance:
    """
    Minimisation model with sparse rows lo <= a.x <= hi and a name map from
    (family, index) to row ids. Treated as read-only once handed to a solver;
    fixed() and with_rhs() return modified copies that share the row storage.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: List[str] = []
        self._kind: List[VarKind] = []
        self._lb: List[float] = []
        self._ub: List[float] = []

        self._row_cols: List[np.ndarray] = []
        self._row_vals: List[np.ndarray] = []
        self._row_sense: List[Sense] = []
        self._row_rhs: List[float] = []
        self._row_names: List[str] = []
        self._families: Dict[str, Dict[Hashable, int]] = {}

        self._objective = LinExpr()
        self._matrix_cache: Optional[sparse.csr_matrix] = None

    # ------------------------------------------------------------------ variables

    @property
    def n_vars(self) -> int:
        return len(self._lb)

    @property
    def n_rows(self) -> int:
        return len(self._row_rhs)

    def add_var(self, name: str, kind: VarKind = VarKind.CONTINUOUS,
                lb: float = 0.0, ub: float = math.inf) -> int:
        if kind is VarKind.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise FormulationError(f"Variable {name}: empty bounds [{lb}, {ub}]")
        self.var_names.append(name)
        self._kind.append(kind)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        return len(self._lb) - 1

    def add_vars(self, prefix: str, shape: Tuple[int, ...], kind: VarKind = VarKind.CONTINUOUS,
                 lb: float = 0.0, ub: float = math.inf) -> np.ndarray:
        """Block of variables named prefix_i_j..., returned as an id array"""
        ids = np.empty(shape, dtype=np.int64)
        for index in np.ndindex(*shape):
            ids[index] = self.add_var(f"{prefix}_{'_'.join(map(str, index))}", kind, lb, ub)
        return ids

    def kind(self, idx: int) -> VarKind:
        return self._kind[idx]

    def bounds(self, idx: int) -> Tuple[float, float]:
        return self._lb[idx], self._ub[idx]

    @property
    def lower_bounds(self) -> np.ndarray:
        return np.array(self._lb, dtype=float)

    @property
    def upper_bounds(self) -> np.ndarray:
        return np.array(self._ub, dtype=float)

    @property
    def integrality(self) -> np.ndarray:
        """1 for binary/integer variables, 0 otherwise (scipy.optimize.milp convention)"""
        return np.array([0 if k is VarKind.CONTINUOUS else 1 for k in self._kind], dtype=np.int8)

    @property
    def has_integers(self) -> bool:
        return any(k is not VarKind.CONTINUOUS for k in self._kind)

    # ------------------------------------------------------------------ rows

    def add_constraint(self, lhs: ExprLike, sense: Sense, rhs: ExprLike = 0.0,
                       family: str = "row", index: Hashable = None) -> int:
        """Add lhs (sense) rhs; constants are moved to the right-hand side"""
        expr = LinExpr.lift(lhs) - LinExpr.lift(rhs)
        terms = {k: v for k, v in expr.terms.items() if v != 0.0}
        if not terms:
            logger.debug(f"Row {family}{index!r} has no variables (constant {expr.const:g} {sense.value} 0)")
        cols = np.fromiter(sorted(terms), dtype=np.int64, count=len(terms))
        vals = np.array([terms[c] for c in cols], dtype=float)
        row = len(self._row_rhs)
        self._row_cols.append(cols)
        self._row_vals.append(vals)
        self._row_sense.append(sense)
        self._row_rhs.append(-expr.const)

        if index is None:
            index = len(self._families.get(family, {}))
        rows = self._families.setdefault(family, {})
        if index in rows:
            raise FormulationError(f"Duplicate row name {family}{index!r}")
        rows[index] = row
        suffix = "_".join(map(str, index)) if isinstance(index, tuple) else str(index)
        self._row_names.append(f"{family}_{suffix}")
        self._matrix_cache = None
        return row

    def families(self) -> List[str]:
        return sorted(self._families)

    def family_rows(self, family: str) -> Dict[Hashable, int]:
        return dict(self._families.get(family, {}))

    def row(self, family: str, index: Hashable) -> int:
        try:
            return self._families[family][index]
        except KeyError:
            raise KeyError(f"No row {family}{index!r} in {self.name}")

    def row_name(self, row: int) -> str:
        return self._row_names[row]

    def rhs(self, row: int) -> float:
        return self._row_rhs[row]

    # ------------------------------------------------------------------ objective

    def set_objective(self, expr: ExprLike):
        self._objective = LinExpr.lift(expr).copy()

    def add_objective(self, expr: ExprLike):
        self._objective = self._objective + expr

    @property
    def objective(self) -> LinExpr:
        return self._objective

    def objective_vector(self) -> Tuple[np.ndarray, float]:
        c = np.zeros(self.n_vars)
        for k, v in self._objective.terms.items():
            c[k] += v
        return c, self._objective.const

    def evaluate(self, x: np.ndarray) -> float:
        c, offset = self.objective_vector()
        return float(c @ x + offset)

    # ------------------------------------------------------------------ matrix views

    def matrix(self) -> sparse.csr_matrix:
        if self._matrix_cache is None or self._matrix_cache.shape != (self.n_rows, self.n_vars):
            lengths = np.array([len(c) for c in self._row_cols], dtype=np.int64)
            indptr = np.concatenate(([0], np.cumsum(lengths)))
            indices = np.concatenate(self._row_cols) if self._row_cols else np.zeros(0, dtype=np.int64)
            data = np.concatenate(self._row_vals) if self._row_vals else np.zeros(0)
            self._matrix_cache = sparse.csr_matrix((data, indices, indptr), shape=(self.n_rows, self.n_vars))
        return self._matrix_cache

    def row_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        rhs = np.array(self._row_rhs, dtype=float)
        lo = np.full(self.n_rows, -np.inf)
        hi = np.full(self.n_rows, np.inf)
        for r, sense in enumerate(self._row_sense):
            if sense is not Sense.GE:
                hi[r] = rhs[r]
            if sense is not Sense.LE:
                lo[r] = rhs[r]
        return lo, hi

    def row_violations(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation >= 0 at point x (bounds not included)"""
        activity = self.matrix() @ np.asarray(x, dtype=float)
        lo, hi = self.row_bounds()
        return np.maximum(np.maximum(lo - activity, activity - hi), 0.0)

    def bound_violations(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.maximum(np.maximum(self.lower_bounds - x, x - self.upper_bounds), 0.0)

    # ------------------------------------------------------------------ derived instances

    def fixed(self, assignments: Mapping[int, float], relax_integrality: bool = True,
              name: Optional[str] = None) -> "MilpInstance":
        """Copy with the given variables fixed; remaining integer variables become continuous"""
        clone = copy.copy(self)
        clone.name = name or f"{self.name}_fixed"
        clone._lb = list(self._lb)
        clone._ub = list(self._ub)
        clone._kind = list(self._kind)
        for idx, value in assignments.items():
            clone._lb[idx] = clone._ub[idx] = float(value)
        if relax_integrality:
            clone._kind = [VarKind.CONTINUOUS] * len(clone._kind)
        return clone

    def with_rhs(self, updates: Mapping[int, float], name: Optional[str] = None) -> "MilpInstance":
        """Copy with replaced right-hand sides for the given row ids"""
        clone = copy.copy(self)
        clone.name = name or self.name
        clone._row_rhs = list(self._row_rhs)
        for row, value in updates.items():
            clone._row_rhs[row] = float(value)
        return clone

    def with_objective(self, expr: ExprLike, name: Optional[str] = None) -> "MilpInstance":
        clone = copy.copy(self)
        clone.name = name or self.name
        clone._objective = LinExpr.lift(expr).copy()
        return clone

    # ------------------------------------------------------------------ export

    def summary(self) -> str:
        kinds = {k: sum(1 for x in self._kind if x is k) for k in VarKind}
        return (f"{self.name}: {self.n_vars} vars ({kinds[VarKind.BINARY]} bin, "
                f"{kinds[VarKind.INTEGER]} int), {self.n_rows} rows, nnz={self.matrix().nnz}")

    def write_lp(self, stream: IO[str]):
        """
        Write the model in CPLEX LP text format

        Rows appear in creation order and each expression lists its
        variables by ascending id, so equal models produce equal files.
        """
        def fmt_terms(cols, vals) -> str:
            parts = []
            for c, v in zip(cols, vals):
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v):.12g} {self.var_names[c]}")
            text = " ".join(parts) if parts else "0 " + (self.var_names[0] if self.var_names else "")
            return text[2:] if text.startswith("+ ") else text

        c, offset = self.objective_vector()
        nz = np.flatnonzero(c)
        stream.write(f"\\ Model {self.name}\n")
        if offset:
            stream.write(f"\\ Objective constant {offset:.12g}\n")
        stream.write("Minimize\n obj: ")
        stream.write(fmt_terms(nz, c[nz]) if len(nz) else "0 " + (self.var_names[0] if self.var_names else "x"))
        stream.write("\nSubject To\n")
        for r in range(self.n_rows):
            op = self._row_sense[r].value
            stream.write(f" {self._row_names[r]}: {fmt_terms(self._row_cols[r], self._row_vals[r])} "
                         f"{op} {self._row_rhs[r]:.12g}\n")

        stream.write("Bounds\n")
        for i, name in enumerate(self.var_names):
            lb, ub = self._lb[i], self._ub[i]
            if self._kind[i] is VarKind.BINARY and lb == 0 and ub == 1:
                continue
            lo = "-inf" if math.isinf(lb) else f"{lb:.12g}"
            hi = "+inf" if math.isinf(ub) else f"{ub:.12g}"
            if lb == ub:
                stream.write(f" {name} = {lb:.12g}\n")
            else:
                stream.write(f" {lo} <= {name} <= {hi}\n")

        generals = [n for n, k in zip(self.var_names, self._kind) if k is VarKind.INTEGER]
        binaries = [n for n, k in zip(self.var_names, self._kind) if k is VarKind.BINARY]
        if generals:
            stream.write("General\n " + "\n ".join(generals) + "\n")
        if binaries:
            stream.write("Binary\n " + "\n ".join(binaries) + "\n")
        stream.write("End\n")
