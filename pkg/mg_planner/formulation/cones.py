"""
Polyhedral outer approximation of second-order cones

Uses the Ben-Tal/Nemirovski tower: the 2-D cone sqrt(x^2 + y^2) <= t is
replaced by `levels` successive rotations that halve the angular sector each
time. A point of the true cone always admits a lifting, and any feasible
(x, y, t) satisfies sqrt(x^2 + y^2) <= t / cos(pi / 2^(levels+1)).
Each level's rotated coordinate is also capped by t, which makes the
approximations nested: raising the depth never enlarges the feasible set.
"""
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..exceptions import ConfigurationError, FormulationError
from .milp import ExprLike, LinExpr, MilpInstance, Sense


def level_error(levels: int) -> float:
    """Relative outer-approximation error of a tower with the given depth"""
    return 1.0 / math.cos(math.pi / 2 ** (levels + 1)) - 1.0


def levels_for(eps: float, level_cap: int) -> int:
    """Smallest depth whose error is within eps"""
    for levels in range(1, level_cap + 1):
        if level_error(levels) <= eps:
            return levels
    raise FormulationError(
        f"Cone accuracy {eps:g} needs more than {level_cap} levels "
        f"(best reachable {level_error(level_cap):.3g})")


@dataclass(frozen=True)
class ConeApproxConfig:
    """Accuracy of the polyhedral cone approximation"""
    accuracy_eps: float = 1e-3
    level_cap: int = 12
    levels: int = field(init=False)
    rotated_levels: int = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.accuracy_eps < 1.0:
            raise ConfigurationError(f"accuracy_eps must lie in (0, 1), got {self.accuracy_eps}")
        object.__setattr__(self, "levels", levels_for(self.accuracy_eps, self.level_cap))
        # two chained towers, each within sqrt(1+eps)
        stage_eps = math.sqrt(1.0 + self.accuracy_eps) - 1.0
        object.__setattr__(self, "rotated_levels", levels_for(stage_eps, self.level_cap))

    @property
    def effective_eps(self) -> float:
        return level_error(self.levels)

    @property
    def effective_rotated_eps(self) -> float:
        return (1.0 + level_error(self.rotated_levels)) ** 2 - 1.0

    @property
    def admitted_eps(self) -> float:
        """Largest relative cone excess any generated row admits"""
        return max(self.effective_eps, self.effective_rotated_eps)


@dataclass(frozen=True)
class ConeBlock:
    """Rows and auxiliary variables created for one approximated cone"""
    rows: List[int]
    xi: List[int]
    eta: List[int]
    levels: int

    def lift(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Exact-rotation values of the auxiliary variables for points (x, y)

        Returns:
            (xi, eta) arrays of shape (levels+1, len(x))
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        xi = np.empty((self.levels + 1, x.size))
        eta = np.empty_like(xi)
        xi[0], eta[0] = np.abs(x), np.abs(y)
        for j in range(1, self.levels + 1):
            a = math.pi / 2 ** (j + 1)
            xi[j] = math.cos(a) * xi[j - 1] + math.sin(a) * eta[j - 1]
            eta[j] = np.abs(-math.sin(a) * xi[j - 1] + math.cos(a) * eta[j - 1])
        return xi, eta


def approximate_cone(model: MilpInstance, x: ExprLike, y: ExprLike, t: ExprLike,
                     cfg: ConeApproxConfig, family: str, index: tuple,
                     levels: int = None) -> ConeBlock:
    """
    Add rows enforcing an outer approximation of sqrt(x^2 + y^2) <= t

    Args:
        model: Instance receiving the rows
        x, y, t: Affine expressions (t must be bounded above for the rows to be bounded)
        cfg: Approximation accuracy
        family: Row family name; rows are indexed (*index, part, level)
        index: Index tuple identifying this cone in the name map
        levels: Override the depth derived from cfg

    Returns:
        ConeBlock with row and auxiliary variable ids
    """
    nu = cfg.levels if levels is None else levels
    x, y, t = LinExpr.lift(x), LinExpr.lift(y), LinExpr.lift(t)
    tag = "_".join(map(str, index))
    rows = []

    xi = [model.add_var(f"{family}_xi_{tag}_{j}", lb=0.0) for j in range(nu + 1)]
    eta = [model.add_var(f"{family}_eta_{tag}_{j}", lb=0.0) for j in range(nu + 1)]
    xi_e = [LinExpr.var(v) for v in xi]
    eta_e = [LinExpr.var(v) for v in eta]

    rows.append(model.add_constraint(xi_e[0] - x, Sense.GE, 0.0, family, (*index, "xp", 0)))
    rows.append(model.add_constraint(xi_e[0] + x, Sense.GE, 0.0, family, (*index, "xn", 0)))
    rows.append(model.add_constraint(eta_e[0] - y, Sense.GE, 0.0, family, (*index, "yp", 0)))
    rows.append(model.add_constraint(eta_e[0] + y, Sense.GE, 0.0, family, (*index, "yn", 0)))

    for j in range(1, nu + 1):
        a = math.pi / 2 ** (j + 1)
        c, s = math.cos(a), math.sin(a)
        rotated = -s * xi_e[j - 1] + c * eta_e[j - 1]
        rows.append(model.add_constraint(xi_e[j], Sense.EQ, c * xi_e[j - 1] + s * eta_e[j - 1],
                                         family, (*index, "rot", j)))
        rows.append(model.add_constraint(eta_e[j] - rotated, Sense.GE, 0.0, family, (*index, "ep", j)))
        rows.append(model.add_constraint(eta_e[j] + rotated, Sense.GE, 0.0, family, (*index, "en", j)))

    # every level bounded by t, so a deeper tower projects inside a shallower one
    for j in range(nu + 1):
        rows.append(model.add_constraint(xi_e[j], Sense.LE, t, family, (*index, "top", j)))
    rows.append(model.add_constraint(eta_e[nu], Sense.LE, math.tan(math.pi / 2 ** (nu + 1)) * xi_e[nu],
                                     family, (*index, "cap", nu)))
    return ConeBlock(rows=rows, xi=xi, eta=eta, levels=nu)


def approximate_rotated_cone(model: MilpInstance, p: ExprLike, q: ExprLike, psi: ExprLike, nu: ExprLike,
                             cfg: ConeApproxConfig, family: str, index: tuple,
                             balance: float = 1.0) -> Tuple[int, ConeBlock, ConeBlock]:
    """
    Add rows enforcing an outer approximation of p^2 + q^2 <= psi * nu (psi, nu >= 0)

    With u = (psi+nu)/2 and v = (psi-nu)/2 the constraint reads
    sqrt(p^2 + q^2 + v^2) <= u, approximated as two chained 2-D towers
    sqrt(p^2 + q^2) <= s and sqrt(s^2 + v^2) <= u.

    The outer tower's error is relative to u, so when psi and nu differ by
    orders of magnitude pass balance ~ sqrt(psi/nu): the rows then use
    psi/balance and nu*balance, which have the same product.

    Returns:
        (s variable id, inner block, outer block)
    """
    if balance <= 0.0:
        raise FormulationError(f"Cone balance must be positive, got {balance}")
    psi, nu_expr = LinExpr.lift(psi) / balance, LinExpr.lift(nu) * balance
    u = 0.5 * (psi + nu_expr)
    v = 0.5 * (psi - nu_expr)
    tag = "_".join(map(str, index))
    s = model.add_var(f"{family}_s_{tag}", lb=0.0)
    inner = approximate_cone(model, p, q, LinExpr.var(s), cfg, family, (*index, "in"), levels=cfg.rotated_levels)
    outer = approximate_cone(model, LinExpr.var(s), v, u, cfg, family, (*index, "out"), levels=cfg.rotated_levels)
    return s, inner, outer
