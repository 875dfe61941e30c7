"""
Session logging for planning runs
Structured console/file logging plus per-solve and per-iteration records
"""
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd


@dataclass
class SolveLog:
    """One MILP/LP solve"""
    timestamp: str
    sequence: int
    name: str
    backend: str
    status: str
    objective: Optional[float]
    gap: Optional[float]
    solve_time: float
    n_variables: int
    n_constraints: int


@dataclass
class IterationLog:
    """One pass of the robust loop"""
    timestamp: str
    iteration: int
    main_objective: float
    capex: float
    opex: float
    scenarios_total: int
    added_generation: int
    added_thermal: int
    subproblems: int
    wall_time: float


@dataclass
class SessionReport:
    """Run summary written at cleanup"""
    session_start: str
    session_end: Optional[str] = None
    command: Optional[str] = None
    case_name: Optional[str] = None
    total_solves: int = 0
    failed_solves: int = 0
    iterations: int = 0
    errors_count: int = 0
    uptime_minutes: float = 0.0
    settings: Dict[str, Any] = field(default_factory=dict)


class PlanningLogger:
    """
    Logging system for planning runs with multiple outputs
    """

    def __init__(self, log_dir: str = "logs", log_level: str = "INFO", save_solver_logs: bool = True):
        """
        Initialize the logging system

        Args:
            log_dir: Directory for log files
            log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
            save_solver_logs: Write each backend log to its own text file
        """
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)

        self.session_start = datetime.now()
        self.session_id = self.session_start.strftime("%Y%m%d_%H%M%S")
        self.save_solver_logs = save_solver_logs

        self.solve_logs: List[SolveLog] = []
        self.iteration_logs: List[IterationLog] = []
        self.session_report = SessionReport(session_start=self.session_start.isoformat())

        self._setup_logging(log_level)

        self.solver_log_dir = self.log_dir / "solver_logs" / self.session_id
        self.solves_csv = self.log_dir / f"solves_{self.session_id}.csv"
        self.iterations_csv = self.log_dir / f"iterations_{self.session_id}.csv"
        self.session_json = self.log_dir / f"session_{self.session_id}.json"

        self.logger.info(f"Planner logger initialized, session {self.session_id}")
        self.logger.debug(f"Log directory: {self.log_dir.absolute()}")

    def _setup_logging(self, log_level: str):
        """Attach console, main-file and error-file handlers to the package logger"""
        self.logger = logging.getLogger("mg_planner")
        self.logger.setLevel(logging.DEBUG)

        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)
            handler.close()

        console_formatter = logging.Formatter(
            "%(asctime)s | %(levelname)-8s | %(message)s",
            datefmt="%H:%M:%S"
        )
        file_formatter = logging.Formatter(
            "%(asctime)s | %(name)s | %(levelname)-8s | %(funcName)s:%(lineno)d | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(console_formatter)
        console_handler.setLevel(getattr(logging, log_level.upper()))

        file_handler = logging.FileHandler(self.log_dir / f"main_{self.session_id}.log")
        file_handler.setFormatter(file_formatter)
        file_handler.setLevel(logging.DEBUG)

        error_handler = logging.FileHandler(self.log_dir / f"errors_{self.session_id}.log")
        error_handler.setFormatter(file_formatter)
        error_handler.setLevel(logging.ERROR)

        self.logger.addHandler(console_handler)
        self.logger.addHandler(file_handler)
        self.logger.addHandler(error_handler)

    def info(self, message: str):
        self.logger.info(message)

    def debug(self, message: str):
        self.logger.debug(message)

    def warning(self, message: str):
        self.logger.warning(message)

    def error(self, message: str):
        self.logger.error(message)
        self.session_report.errors_count += 1

    def set_context(self, command: str, case_name: Optional[str] = None,
                    settings: Optional[Dict[str, Any]] = None):
        self.session_report.command = command
        self.session_report.case_name = case_name
        if settings is not None:
            self.session_report.settings = settings

    def log_solve(self, name: str, backend: str, status: str, objective: Optional[float],
                  gap: Optional[float], solve_time: float, n_variables: int, n_constraints: int,
                  solver_output: Optional[str] = None) -> Optional[Path]:
        """
        Record one solve and optionally persist the backend log

        Returns:
            Path of the solver log artifact, if one was written
        """
        entry = SolveLog(
            timestamp=datetime.now().isoformat(),
            sequence=len(self.solve_logs) + 1,
            name=name, backend=backend, status=status,
            objective=objective, gap=gap, solve_time=solve_time,
            n_variables=n_variables, n_constraints=n_constraints,
        )
        self.solve_logs.append(entry)
        self.session_report.total_solves += 1
        if status not in ("optimal", "feasible"):
            self.session_report.failed_solves += 1

        obj_str = f"{objective:.6g}" if objective is not None else "n/a"
        self.debug(f"SOLVE #{entry.sequence} {name}: {status} obj={obj_str} "
                   f"vars={n_variables} rows={n_constraints} t={solve_time:.2f}s")

        artifact = None
        if self.save_solver_logs and solver_output:
            try:
                self.solver_log_dir.mkdir(parents=True, exist_ok=True)
                safe_name = "".join(c if c.isalnum() or c in "-_" else "_" for c in name)
                artifact = self.solver_log_dir / f"{entry.sequence:05d}_{safe_name}.log"
                artifact.write_text(solver_output)
            except OSError as e:
                self.error(f"Error writing solver log for {name}: {str(e)}")
                artifact = None
        return artifact

    def log_iteration(self, iteration: int, main_objective: float, capex: float, opex: float,
                      scenarios_total: int, added_generation: int, added_thermal: int,
                      subproblems: int, wall_time: float):
        """Record one robust-loop iteration"""
        self.iteration_logs.append(IterationLog(
            timestamp=datetime.now().isoformat(), iteration=iteration,
            main_objective=main_objective, capex=capex, opex=opex,
            scenarios_total=scenarios_total, added_generation=added_generation,
            added_thermal=added_thermal, subproblems=subproblems, wall_time=wall_time,
        ))
        self.session_report.iterations = iteration
        self.info(f"ITERATION {iteration}: objective {main_objective:.6g} | "
                  f"+{added_generation} generation / +{added_thermal} thermal scenarios | "
                  f"|S|={scenarios_total}")

    def _save_csv(self):
        try:
            if self.solve_logs:
                pd.DataFrame([asdict(log) for log in self.solve_logs]).to_csv(self.solves_csv, index=False)
            if self.iteration_logs:
                pd.DataFrame([asdict(log) for log in self.iteration_logs]).to_csv(self.iterations_csv, index=False)
        except Exception as e:
            self.error(f"Error saving CSV logs: {str(e)}")

    def save_session_report(self):
        """Write the JSON session report and the CSV tables"""
        try:
            session_end = datetime.now()
            self.session_report.session_end = session_end.isoformat()
            self.session_report.uptime_minutes = (session_end - self.session_start).total_seconds() / 60

            self._save_csv()
            with open(self.session_json, "w") as f:
                json.dump(asdict(self.session_report), f, indent=2, default=str)

            self.debug(f"Session report saved: {self.session_json}")
        except Exception as e:
            self.error(f"Error saving session report: {str(e)}")

    def cleanup(self):
        """Flush reports and close file handlers"""
        try:
            self.save_session_report()
            for handler in self.logger.handlers[:]:
                if isinstance(handler, logging.FileHandler):
                    handler.close()
                    self.logger.removeHandler(handler)
        except Exception as e:
            print(f"Error during logger cleanup: {str(e)}", file=sys.stderr)


# Global logger instance
_global_logger: Optional[PlanningLogger] = None


def get_logger(log_dir: str = "logs", log_level: str = "INFO", save_solver_logs: bool = True) -> PlanningLogger:
    """
    Get global logger instance (singleton pattern)

    Args:
        log_dir: Directory for log files
        log_level: Console logging level
        save_solver_logs: Persist per-solve backend logs

    Returns:
        PlanningLogger instance
    """
    global _global_logger
    if _global_logger is None:
        _global_logger = PlanningLogger(log_dir, log_level, save_solver_logs)
    return _global_logger


def active_logger() -> Optional[PlanningLogger]:
    """The installed session logger, or None when running as a library"""
    return _global_logger


def cleanup_logger():
    """Cleanup global logger"""
    global _global_logger
    if _global_logger is not None:
        _global_logger.cleanup()
        _global_logger = None
