"""
Solver gateway: one seam for every MILP/LP backend
"""
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..config.settings import Backend, Settings
from ..exceptions import ConfigurationError, SolverBackendError, SolverUnavailableError
from ..formulation.milp import MilpInstance, VarKind
from ..utils.logger import active_logger

# python-mip is optional; only the CBC backend needs it
try:
    import mip
    MIP_AVAILABLE = True
except ImportError:
    mip = None
    MIP_AVAILABLE = False


logger = logging.getLogger(__name__)


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class SolveOptions:
    """Backend-independent solve parameters"""
    mip_gap: float = 1e-6
    time_limit: float = 600.0
    threads: int = 1
    verbosity: int = 0
    backend: Backend = Backend.HIGHS
    integrality_tol: float = 1e-6
    feasibility_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.mip_gap < 0:
            raise ConfigurationError(f"mip_gap must be >= 0, got {self.mip_gap}")
        if not self.time_limit > 0:
            raise ConfigurationError(f"time_limit must be > 0, got {self.time_limit}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")

    @classmethod
    def from_settings(cls, settings: Settings) -> "SolveOptions":
        s = settings.solver
        return cls(mip_gap=s.mip_gap, time_limit=s.time_limit, threads=s.threads, verbosity=s.verbosity,
                   backend=s.backend, integrality_tol=s.integrality_tol, feasibility_tol=s.feasibility_tol,
                   seed=s.seed)


@dataclass
class MilpSolution:
    """Result of one solve; values is None when no point is available"""
    status: SolveStatus
    objective: float
    values: Optional[np.ndarray]
    gap: float
    solve_time: float
    backend: str = ""
    message: str = ""

    @property
    def has_point(self) -> bool:
        return self.values is not None and self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE)


def _solve_highs(instance: MilpInstance, opts: SolveOptions) -> MilpSolution:
    c, offset = instance.objective_vector()
    constraints = []
    if instance.n_rows:
        lo, hi = instance.row_bounds()
        constraints.append(LinearConstraint(instance.matrix(), lo, hi))
    options = {
        "disp": opts.verbosity > 0,
        "presolve": True,
        "time_limit": float(opts.time_limit),
    }
    if instance.has_integers:
        options["mip_rel_gap"] = opts.mip_gap

    start = time.perf_counter()
    try:
        res = milp(c, integrality=instance.integrality,
                   bounds=Bounds(instance.lower_bounds, instance.upper_bounds),
                   constraints=constraints, options=options)
    except ValueError as e:
        raise SolverBackendError(f"HiGHS rejected {instance.name}: {str(e)}") from e
    elapsed = time.perf_counter() - start

    x = None if res.x is None else np.asarray(res.x, dtype=float)
    if res.status == 0:
        status = SolveStatus.OPTIMAL
    elif res.status == 1:
        status = SolveStatus.FEASIBLE if x is not None else SolveStatus.TIME_LIMIT
    elif res.status == 2:
        status = SolveStatus.INFEASIBLE
    elif res.status == 3:
        status = SolveStatus.UNBOUNDED
    else:
        raise SolverBackendError(f"HiGHS failed on {instance.name}: {res.message}")

    objective = float(res.fun) + offset if x is not None and res.fun is not None else math.nan
    gap = getattr(res, "mip_gap", None)
    gap = float(gap) if gap is not None and instance.has_integers else 0.0
    return MilpSolution(status=status, objective=objective, values=x, gap=gap, solve_time=elapsed,
                        backend=Backend.HIGHS.value, message=str(res.message))


def _solve_cbc(instance: MilpInstance, opts: SolveOptions) -> MilpSolution:
    if not MIP_AVAILABLE:
        raise SolverUnavailableError("Backend 'cbc' needs python-mip (pip install mg-planner[cbc])")

    c, offset = instance.objective_vector()
    start = time.perf_counter()
    try:
        model = mip.Model(name=instance.name, sense=mip.MINIMIZE, solver_name=mip.CBC)
        model.verbose = 1 if opts.verbosity > 0 else 0
        model.threads = opts.threads
        model.seed = opts.seed
        model.max_mip_gap = opts.mip_gap
        model.infeas_tol = opts.feasibility_tol
        model.integer_tol = opts.integrality_tol

        var_type = {VarKind.CONTINUOUS: mip.CONTINUOUS, VarKind.INTEGER: mip.INTEGER, VarKind.BINARY: mip.BINARY}
        xs = []
        for idx, name in enumerate(instance.var_names):
            lb, ub = instance.bounds(idx)
            xs.append(model.add_var(name=name, lb=-mip.INF if math.isinf(lb) else lb,
                                    ub=mip.INF if math.isinf(ub) else ub,
                                    var_type=var_type[instance.kind(idx)]))

        matrix = instance.matrix()
        lo, hi = instance.row_bounds()
        for r in range(instance.n_rows):
            start_ptr, end_ptr = matrix.indptr[r], matrix.indptr[r + 1]
            if start_ptr == end_ptr:
                if lo[r] > 0 or hi[r] < 0:
                    return MilpSolution(SolveStatus.INFEASIBLE, math.nan, None, 0.0,
                                        time.perf_counter() - start, Backend.CBC.value,
                                        f"constant row {instance.row_name(r)} infeasible")
                continue
            expr = mip.xsum(float(v) * xs[j] for j, v in zip(matrix.indices[start_ptr:end_ptr],
                                                              matrix.data[start_ptr:end_ptr]))
            name = instance.row_name(r)
            if lo[r] == hi[r]:
                model.add_constr(expr == lo[r], name=name)
            else:
                if math.isfinite(lo[r]):
                    model.add_constr(expr >= lo[r], name=f"{name}_lo")
                if math.isfinite(hi[r]):
                    model.add_constr(expr <= hi[r], name=f"{name}_hi")

        model.objective = mip.minimize(mip.xsum(float(c[j]) * xs[j] for j in np.flatnonzero(c)))
        result = model.optimize(max_seconds=opts.time_limit)
    except SolverUnavailableError:
        raise
    except Exception as e:
        raise SolverBackendError(f"CBC failed on {instance.name}: {str(e)}") from e
    elapsed = time.perf_counter() - start

    status_map = {
        mip.OptimizationStatus.OPTIMAL: SolveStatus.OPTIMAL,
        mip.OptimizationStatus.FEASIBLE: SolveStatus.FEASIBLE,
        mip.OptimizationStatus.INFEASIBLE: SolveStatus.INFEASIBLE,
        mip.OptimizationStatus.INT_INFEASIBLE: SolveStatus.INFEASIBLE,
        mip.OptimizationStatus.UNBOUNDED: SolveStatus.UNBOUNDED,
        mip.OptimizationStatus.NO_SOLUTION_FOUND: SolveStatus.TIME_LIMIT,
    }
    if result not in status_map:
        raise SolverBackendError(f"CBC returned {result} on {instance.name}")
    status = status_map[result]

    x = None
    objective = math.nan
    if status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE):
        x = np.array([v.x for v in xs], dtype=float)
        objective = float(model.objective_value) + offset
    gap = float(model.gap) if instance.has_integers and x is not None else 0.0
    return MilpSolution(status=status, objective=objective, values=x, gap=gap, solve_time=elapsed,
                        backend=Backend.CBC.value, message=str(result))


def _integrality_residual(instance: MilpInstance, x: np.ndarray) -> float:
    mask = instance.integrality.astype(bool)
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(x[mask] - np.round(x[mask]))))


def solve(instance: MilpInstance, opts: Optional[SolveOptions] = None) -> MilpSolution:
    """
    Solve a MilpInstance with the configured backend

    Args:
        instance: Model to solve (minimisation)
        opts: Solve options; defaults to HiGHS with a 1e-6 gap

    Returns:
        MilpSolution
    """
    opts = opts or SolveOptions()
    if opts.backend is Backend.HIGHS:
        solution = _solve_highs(instance, opts)
    elif opts.backend is Backend.CBC:
        solution = _solve_cbc(instance, opts)
    else:
        raise SolverUnavailableError(f"Unknown backend {opts.backend}")

    if solution.status is SolveStatus.OPTIMAL and solution.values is not None:
        residual = _integrality_residual(instance, solution.values)
        if residual > opts.integrality_tol:
            logger.warning(f"{instance.name}: integrality residual {residual:.2e} above {opts.integrality_tol:.0e}")

    logger.debug(f"{instance.name}: {solution.status.value} obj={solution.objective:.9g} "
                 f"gap={solution.gap:.2e} t={solution.solve_time:.3f}s")

    session = active_logger()
    if session is not None:
        report = (f"{instance.summary()}\nbackend: {solution.backend}\nstatus: {solution.status.value}\n"
                  f"message: {solution.message}\nobjective: {solution.objective!r}\ngap: {solution.gap!r}\n"
                  f"time: {solution.solve_time:.6f}s\n")
        session.log_solve(instance.name, solution.backend, solution.status.value,
                          None if math.isnan(solution.objective) else solution.objective,
                          solution.gap, solution.solve_time, instance.n_vars, instance.n_rows,
                          solver_output=report)
    return solution
