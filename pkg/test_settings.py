"""
Tests for settings loading, the session logger and the exception hierarchy
"""
import json

import pytest

from mg_planner.config.settings import Backend, GenerationAdversary, RobustSettings, Settings
from mg_planner.exceptions import (
    CaseValidationError, ConfigurationError, IterationLimitError, PlannerError, ScenarioFormatError
)
from mg_planner.solver_gateway import SolveOptions
from mg_planner.utils.logger import active_logger, cleanup_logger, get_logger


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("MG_PLANNER_BACKEND", "MG_PLANNER_TIME_LIMIT", "MG_PLANNER_LOG_LEVEL", "MG_PLANNER_OUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    yield
    cleanup_logger()


def test_defaults():
    settings = Settings.from_ini(use_env=False)
    assert settings.solver.backend is Backend.HIGHS
    assert settings.solver.mip_gap == 1e-6
    assert settings.cone.accuracy_eps == 1e-3
    assert settings.cone.level_cap == 12
    assert settings.robust == RobustSettings()
    assert settings.chance.samples == 100_000
    assert settings.output.out_dir == "results"


def test_ini_values_are_coerced(tmp_path):
    ini = tmp_path / "planner.ini"
    ini.write_text("[solver]\nbackend = CBC\ntime_limit = 30\n\n[robust]\nmax_iterations = 5\n"
                   "workers = 3\n\n[output]\nsave_solver_logs = no\n")
    settings = Settings.from_ini(str(ini), use_env=False)
    assert settings.solver.backend is Backend.CBC
    assert settings.solver.time_limit == 30.0
    assert settings.robust.max_iterations == 5
    assert settings.robust.workers == 3
    assert settings.robust.generation_adversary is GenerationAdversary.BILEVEL
    assert settings.output.save_solver_logs is False


def test_unknown_keys_are_ignored(tmp_path):
    ini = tmp_path / "planner.ini"
    ini.write_text("[solver]\nflavour = vanilla\n\n[nowhere]\nkey = 1\n")
    settings = Settings.from_ini(str(ini), use_env=False)
    assert settings.solver.mip_gap == 1e-6


def test_environment_overrides_ini(tmp_path, monkeypatch):
    ini = tmp_path / "planner.ini"
    ini.write_text("[solver]\ntime_limit = 30\n\n[output]\nout_dir = from_ini\n")
    monkeypatch.setenv("MG_PLANNER_TIME_LIMIT", "45")
    monkeypatch.setenv("MG_PLANNER_OUT_DIR", "from_env")
    settings = Settings.from_ini(str(ini))
    assert settings.solver.time_limit == 45.0
    assert settings.output.out_dir == "from_env"


def test_missing_file_and_bad_values(tmp_path):
    with pytest.raises(ConfigurationError):
        Settings.from_ini(str(tmp_path / "absent.ini"), use_env=False)

    ini = tmp_path / "planner.ini"
    ini.write_text("[solver]\nmip_gap = lots\n")
    with pytest.raises(ConfigurationError):
        Settings.from_ini(str(ini), use_env=False)

    ini.write_text("[cone]\naccuracy_eps = 1.5\n")
    with pytest.raises(ConfigurationError):
        Settings.from_ini(str(ini), use_env=False)

    ini.write_text("[robust]\nthermal_directions = 2\n")
    with pytest.raises(ConfigurationError):
        Settings.from_ini(str(ini), use_env=False)

    ini.write_text("[robust]\nmax_enumerated_coordinates = -1\n")
    with pytest.raises(ConfigurationError):
        Settings.from_ini(str(ini), use_env=False)

    ini.write_text("[robust]\ngeneration_adversary = pessimistic\n")
    with pytest.raises(ConfigurationError):
        Settings.from_ini(str(ini), use_env=False)



def test_generation_adversary_reading(tmp_path):
    ini = tmp_path / "planner.ini"
    ini.write_text("[robust]\ngeneration_adversary = Joint\nmax_enumerated_coordinates = 0\n")
    settings = Settings.from_ini(str(ini), use_env=False)
    assert settings.robust.generation_adversary is GenerationAdversary.JOINT
    assert settings.robust.max_enumerated_coordinates == 0
    assert settings.as_dict()["robust"]["generation_adversary"] == "joint"

def test_solve_options_follow_settings():
    settings = Settings()
    settings.set_value("solver", "mip_gap", "1e-4")
    settings.set_value("solver", "threads", "2")
    opts = SolveOptions.from_settings(settings)
    assert opts.mip_gap == 1e-4
    assert opts.threads == 2
    with pytest.raises(ConfigurationError):
        SolveOptions(time_limit=0.0)


def test_as_dict_is_json_ready():
    snapshot = Settings().as_dict()
    assert snapshot["solver"]["backend"] == "highs"
    json.dumps(snapshot)


def test_exception_hierarchy():
    for error in (ConfigurationError("x"), CaseValidationError("nodes[0].id", "missing"),
                  ScenarioFormatError("x"), IterationLimitError("x", [1])):
        assert isinstance(error, PlannerError)
    error = CaseValidationError("electrical.v_max", "must be > 1")
    assert error.field_path == "electrical.v_max"
    assert str(error) == "electrical.v_max: must be > 1"
    assert IterationLimitError("cap", ["a"]).audit == ["a"]


def test_session_logger_records_and_reports(tmp_path):
    session = get_logger(str(tmp_path), "WARNING", save_solver_logs=True)
    assert active_logger() is session
    assert get_logger() is session

    session.set_context("plan", "sample", {"solver": {"mip_gap": 1e-6}})
    artifact = session.log_solve("main_1", "highs", "optimal", 12.5, 0.0, 0.1, 10, 20, solver_output="log text")
    session.log_solve("shed_t0", "highs", "infeasible", None, None, 0.01, 4, 6)
    session.log_iteration(1, 12.5, 10.0, 2.5, 1, 1, 0, 3, 0.5)

    assert artifact is not None and artifact.read_text() == "log text"
    assert session.session_report.total_solves == 2
    assert session.session_report.failed_solves == 1
    assert session.session_report.iterations == 1

    session_json = session.session_json
    cleanup_logger()
    assert active_logger() is None
    report = json.loads(session_json.read_text())
    assert report["command"] == "plan"
    assert report["case_name"] == "sample"
    assert (tmp_path / f"solves_{session.session_id}.csv").exists()
    assert (tmp_path / f"iterations_{session.session_id}.csv").exists()
