#!/usr/bin/env python3
"""
Command-line entry point for the microgrid planner

Exit codes: 0 success, 1 violations found or unexpected error, 2 input error,
3 robust loop did not converge, 4 backend failure.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

from .chance import LoadDistribution, chance_box, verify_coverage
from .config.settings import Backend, GenerationAdversary, Settings
from .core_model.case import NetworkCase, load_case
from .core_model.feasibility import Tolerances, check_plan
from .exceptions import (
    CaseValidationError, ConfigurationError, DimensionError, IterationLimitError, PlannerError,
    ScenarioFormatError, SolverBackendError, SolverUnavailableError
)
from .formulation.cones import ConeApproxConfig
from .formulation.planning_model import build_deterministic, build_main_problem
from .oracle.constraint_eval import evaluate_constraints
from .robust_engine import (
    Scenario, UncertaintyBox, dump_box, dump_scenarios, restore_scenarios, robust_plan, run_sweep
)
from .robust_engine.subproblems import operate
from .solver_gateway import SolveOptions, extract, polish, solve
from .utils.logger import cleanup_logger, get_logger
from .utils.reporting import (
    ROBUST_SCHEMA, RobustDocument, plan_document, plan_from_document, summary_row, write_document,
    write_summary
)


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_BACKEND = 4


def _exit_code(error: Exception) -> int:
    if isinstance(error, (CaseValidationError, ScenarioFormatError, ConfigurationError, DimensionError,
                          json.JSONDecodeError, OSError)):
        return EXIT_INPUT
    if isinstance(error, IterationLimitError):
        return EXIT_NONCONVERGED
    if isinstance(error, (SolverUnavailableError, SolverBackendError)):
        return EXIT_BACKEND
    return EXIT_FAILED


def print_banner(command: str):
    print("=" * 70)
    print(f"MG PLANNER - {command}")
    print("=" * 70)


# ----------------------------------------------------------------------------
# Inputs
# ----------------------------------------------------------------------------

def _read_case(path: str) -> NetworkCase:
    with open(path, "rb") as f:
        return load_case(f)


def _read_json(path: str) -> dict:
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioFormatError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")


def _read_scenarios(path: Optional[str], case: NetworkCase) -> List[Scenario]:
    if path is None:
        return []
    with open(path) as f:
        return restore_scenarios(f, case)


def _settings(args: argparse.Namespace) -> Settings:
    """Defaults < INI < environment < flags"""
    settings = Settings.from_ini(args.config)
    overrides = {
        ("cone", "accuracy_eps"): args.btn_accuracy,
        ("solver", "mip_gap"): args.mip_gap,
        ("solver", "time_limit"): args.time_limit,
        ("solver", "backend"): args.backend,
        ("robust", "max_iterations"): getattr(args, "max_iterations", None),
        ("robust", "tol"): getattr(args, "tol", None),
        ("robust", "workers"): getattr(args, "workers", None),
        ("robust", "generation_adversary"): getattr(args, "generation_adversary", None),
        ("chance", "seed"): getattr(args, "seed", None),
        ("chance", "samples"): getattr(args, "samples", None),
        ("output", "out_dir"): args.out_dir,
        ("output", "log_level"): args.log_level,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            settings.set_value(section, key, str(value))
    settings.validate()
    return settings


def _cone_config(settings: Settings) -> ConeApproxConfig:
    return ConeApproxConfig(accuracy_eps=settings.cone.accuracy_eps, level_cap=settings.cone.level_cap)


def _box(args: argparse.Namespace, case: NetworkCase) -> UncertaintyBox:
    if args.epsilon is not None:
        if args.load_lb is not None or args.load_ub is not None:
            raise ConfigurationError("Give either --epsilon or --load-lb/--load-ub, not both")
        return chance_box(LoadDistribution.from_case(case), args.epsilon)
    lower = 1.0 if args.load_lb is None else args.load_lb
    upper = 1.0 if args.load_ub is None else args.load_ub
    return UncertaintyBox.from_factors(case, lower, upper)


def _out_dir(settings: Settings) -> Path:
    path = Path(settings.output.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------

def cmd_plan(args: argparse.Namespace, settings: Settings) -> int:
    """Deterministic planning: plan.json and summary.txt"""
    case = _read_case(args.case)
    started = time.perf_counter()
    opts = SolveOptions.from_settings(settings)
    model = build_deterministic(case, _cone_config(settings))
    if args.export_lp:
        with open(args.export_lp, "w") as f:
            model.instance.write_lp(f)
        logger.info(f"Model written to {args.export_lp}")

    solution = solve(model.instance, opts)
    if not solution.has_point:
        raise SolverBackendError(f"Deterministic planning problem ended {solution.status.value}")
    solution = polish(model, solution, opts)
    plan, states, money = extract(model, solution, opts.integrality_tol)

    report = check_plan(case, plan, states[0], Tolerances(cone_eps=model.cone_cfg.admitted_eps))
    if not report.ok:
        logger.warning(f"Extracted plan has violations in {report.families()}")
    logger.info(f"Largest current/voltage relaxation gap: {report.max_relaxation_gap:.3g}")

    out = _out_dir(settings)
    write_document(out / "plan.json", plan_document(case, plan, money, states, solution.gap, settings.as_dict()))
    write_summary(out / "summary.txt",
                  {"deterministic": summary_row(money, 1, 1, time.perf_counter() - started)},
                  title=f"Planning summary - {case.name}")
    print(f"NPV {money.npv:,.2f} (CAPEX {money.discounted_capex:,.2f}, OPEX {money.discounted_opex:,.2f})")
    return EXIT_OK


def cmd_robust(args: argparse.Namespace, settings: Settings) -> int:
    """Robust planning: plan.json, robust.json, scenarios.jsonl, summary.txt"""
    case = _read_case(args.case)
    box = _box(args, case)
    initial = _read_scenarios(args.scenarios, case)
    cone_cfg = _cone_config(settings)
    opts = SolveOptions.from_settings(settings)
    out = _out_dir(settings)
    started = time.perf_counter()

    try:
        result = robust_plan(case, box, cone_cfg, opts, settings.robust, initial)
    except IterationLimitError as e:
        if e.audit:
            write_document(out / "audit.json", {"schema": "mg-planner/audit/1",
                                                "audit": [a.__dict__ for a in e.audit]})
        raise

    if args.export_lp:
        with open(args.export_lp, "w") as f:
            build_main_problem(case, result.scenarios, cone_cfg, name="robust").instance.write_lp(f)

    plan_doc = plan_document(case, result.plan, result.money, result.states, result.gap, settings.as_dict())
    by_origin: Dict[str, int] = {}
    for s in result.scenarios:
        by_origin[s.origin.value] = by_origin.get(s.origin.value, 0) + 1
    robust_doc = RobustDocument(
        schema=ROBUST_SCHEMA, plan=plan_doc, iterations=result.iterations,
        scenarios_total=len(result.scenarios), scenarios_by_origin=by_origin,
        audit=[{k: v for k, v in a.__dict__.items() if k != "wall_time"} for a in result.audit],
        box={"load_lb": args.load_lb, "load_ub": args.load_ub, "epsilon": args.epsilon},
        objective_monotone=result.objective_monotone,
    )
    write_document(out / "plan.json", plan_doc)
    write_document(out / "robust.json", robust_doc)
    with open(out / "scenarios.jsonl", "w") as f:
        dump_scenarios(result.scenarios, f)

    rows = {"robust": summary_row(result.money, len(result.scenarios), result.iterations,
                                  time.perf_counter() - started)}
    write_summary(out / "summary.txt", rows, title=f"Robust planning summary - {case.name}")
    print(f"NPV {result.money.npv:,.2f} after {result.iterations} iteration(s), "
          f"{len(result.scenarios)} scenario(s)")
    return EXIT_OK


def cmd_check(args: argparse.Namespace, settings: Settings) -> int:
    """Residual table of a saved plan against scenarios; exit 0 iff nothing is violated"""
    case = _read_case(args.case)
    plan = plan_from_document(_read_json(args.plan), case)
    scenarios = _read_scenarios(args.scenarios, case) or [Scenario.deterministic(case)]
    cone_cfg = _cone_config(settings)
    opts = SolveOptions.from_settings(settings)
    tolerances = Tolerances(cone_eps=cone_cfg.admitted_eps)

    failed = False
    for k, scenario in enumerate(scenarios):
        shed, state = operate(case, plan, scenario, cone_cfg, opts)
        table = evaluate_constraints(case, plan, state, scenario, tolerances)
        violated = table[table["violated"]]
        print(f"Scenario {k} ({scenario.origin.value}): shedding {shed:.6g}, "
              f"{len(violated)} violated constraint(s)")
        if not violated.empty:
            print(violated.to_string(index=False))
        if shed > settings.robust.tol or not violated.empty:
            failed = True
    return EXIT_FAILED if failed else EXIT_OK


def cmd_chance(args: argparse.Namespace, settings: Settings) -> int:
    """Chance-constrained box from the case's uncertainty section, with Monte Carlo coverage"""
    case = _read_case(args.case)
    dist = LoadDistribution.from_case(case)
    box = chance_box(dist, args.epsilon)
    coverage = verify_coverage(dist, box, settings.chance.samples, settings.chance.seed, settings.chance.blocks)
    out = _out_dir(settings)
    with open(out / "box.jsonl", "w") as f:
        dump_box(box, f)
    print(f"Box for epsilon={args.epsilon:g}: target mass {1 - args.epsilon:.6f}, "
          f"empirical coverage {coverage:.6f} ({settings.chance.samples} samples)")
    return EXIT_OK


def cmd_audit(args: argparse.Namespace, settings: Settings) -> int:
    """One adversary sweep on a saved plan; problematic scenarios go to scenarios.jsonl"""
    case = _read_case(args.case)
    plan = plan_from_document(_read_json(args.plan), case)
    box = _box(args, case)
    report = run_sweep(case, plan, box, _cone_config(settings), SolveOptions.from_settings(settings),
                       settings.robust)
    out = _out_dir(settings)
    with open(out / "scenarios.jsonl", "w") as f:
        dump_scenarios(report.problematic, f)
    print(f"{len(report.problematic)} problematic scenario(s), {report.subproblems} subproblems solved")
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "robust": cmd_robust,
    "check": cmd_check,
    "chance": cmd_chance,
    "audit": cmd_audit,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI settings file")
    common.add_argument("--btn-accuracy", type=float, help="Cone approximation accuracy (default 1e-3)")
    common.add_argument("--mip-gap", type=float, help="Relative MIP gap (default 1e-6)")
    common.add_argument("--time-limit", type=float, help="Seconds per solve (default 600)")
    common.add_argument("--backend", choices=[b.value for b in Backend], help="MILP backend (default highs)")
    common.add_argument("--out-dir", help="Artifact directory (default results)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Console log level")

    box = argparse.ArgumentParser(add_help=False)
    box.add_argument("--load-lb", type=float, help="Lower load factor of the box (default 1)")
    box.add_argument("--load-ub", type=float, help="Upper load factor of the box (default 1)")
    box.add_argument("--epsilon", type=float, help="Build the box from the case's uncertainty section instead")

    loop = argparse.ArgumentParser(add_help=False)
    loop.add_argument("--max-iterations", type=int, help="Robust loop cap (default 20)")
    loop.add_argument("--tol", type=float, help="Problematic-scenario threshold (default 1e-6)")
    loop.add_argument("--workers", type=int, help="Threads for the adversary sweep (default 1)")
    loop.add_argument("--generation-adversary", choices=[g.value for g in GenerationAdversary],
                      help="Generation adversary reading (default bilevel)")

    parser = argparse.ArgumentParser(
        prog="mg-planner",
        description="Microgrid expansion planning with robust load scenarios",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Deterministic plan
  mg-planner plan cases/three_node.json --out-dir results/det

  # Robust plan for loads between 50% and 150% of the forecast
  mg-planner robust cases/three_node.json --load-lb 0.5 --load-ub 1.5

  # Robust plan against a 95% chance-constrained box
  mg-planner robust cases/three_node.json --epsilon 0.05

  # Check a saved plan against saved scenarios
  mg-planner check cases/three_node.json results/plan.json results/scenarios.jsonl
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="Deterministic planning")
    p.add_argument("case", help="Case JSON file")
    p.add_argument("--export-lp", help="Write the planning model in LP format")

    p = sub.add_parser("robust", parents=[common, box, loop], help="Robust planning")
    p.add_argument("case", help="Case JSON file")
    p.add_argument("--scenarios", help="scenarios.jsonl to resume from")
    p.add_argument("--export-lp", help="Write the final planning model in LP format")

    p = sub.add_parser("check", parents=[common, loop], help="Check a plan against scenarios")
    p.add_argument("case", help="Case JSON file")
    p.add_argument("plan", help="plan.json or robust.json")
    p.add_argument("scenarios", nargs="?", help="scenarios.jsonl (deterministic loads when omitted)")

    p = sub.add_parser("chance", parents=[common], help="Chance-constrained box")
    p.add_argument("case", help="Case JSON file with an uncertainty section")
    p.add_argument("--epsilon", type=float, required=True, help="Violation probability")
    p.add_argument("--samples", type=int, help="Monte Carlo samples (default 100000)")
    p.add_argument("--seed", type=int, help="Monte Carlo seed (default 0)")

    p = sub.add_parser("audit", parents=[common, box, loop], help="One adversary sweep on a saved plan")
    p.add_argument("case", help="Case JSON file")
    p.add_argument("plan", help="plan.json or robust.json")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args)
    except PlannerError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return _exit_code(e)

    session = get_logger(settings.output.log_dir, settings.output.log_level, settings.output.save_solver_logs)
    session.set_context(args.command, Path(args.case).stem, settings.as_dict())
    print_banner(args.command)
    try:
        return COMMANDS[args.command](args, settings)
    except (PlannerError, json.JSONDecodeError, OSError) as e:
        session.error(f"{args.command} failed: {str(e)}")
        print(f"Error: {str(e)}", file=sys.stderr)
        return _exit_code(e)
    except KeyboardInterrupt:
        print("\nStopped by user", file=sys.stderr)
        return EXIT_FAILED
    except Exception as e:
        logger.exception(f"Unexpected error: {str(e)}")
        return EXIT_FAILED
    finally:
        cleanup_logger()


if __name__ == "__main__":
    sys.exit(main())
