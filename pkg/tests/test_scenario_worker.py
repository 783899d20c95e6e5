import csv
import json

import pytest

from core.errors import ReportIoError, SchemaError
from core.scenario import load_scenario
from core.scenario_worker import TRANSPORT_COLUMNS, ScenarioWorker, study_masses
from core.simulation_manager import SimulationManager


def test_transport_snapshots_and_progress(scenario_path):
    scenario = load_scenario(scenario_path("c3.json"))
    worker = ScenarioWorker(scenario, "transport")
    calls = []
    worker.progress_callback = lambda current, total: calls.append((current, total))
    result = worker.run()

    summary = result["summary"]
    assert summary["steps"] == 300
    assert calls[-1] == (300, 300)
    assert len(calls) == 300
    assert result["columns"] == TRANSPORT_COLUMNS
    # snapshots at steps 0, 50, ..., 300 of 3 edges x 100 cells
    assert len(result["rows"]) == 7 * 3 * 100
    assert summary["group"] is True
    assert summary["extinction_time"] == 0.0


def test_overrides_replace_solver_settings(scenario_path):
    scenario = load_scenario(scenario_path("c3.json"))
    worker = ScenarioWorker(scenario, "transport")
    worker.set_parameters(t_final=0.5, h=0.05, record_every=None)
    summary = worker.run()["summary"]
    assert summary["t_final"] == pytest.approx(0.5)
    assert summary["h"] == pytest.approx(0.05)
    assert summary["steps"] == 10
    assert scenario.solver["t_final"] == 3.0


def test_unknown_mode_is_rejected(scenario_path):
    worker = ScenarioWorker(load_scenario(scenario_path("c3.json")), "plot")
    with pytest.raises(SchemaError):
        worker.run()


def test_robin_diffusion_needs_synaptic_model(scenario_path):
    scenario = load_scenario(scenario_path("c3.json"))
    scenario.conditions = "diffusion-robin"
    with pytest.raises(SchemaError):
        ScenarioWorker(scenario, "diffuse").run()


def test_aggregate_needs_its_block(scenario_path):
    with pytest.raises(SchemaError):
        ScenarioWorker(load_scenario(scenario_path("c3.json")), "aggregate").run()


def test_study_masses():
    masses = study_masses([[1.0, 3.0], 2.0, [0.0, 1.0, 0.0]])
    assert masses.tolist() == pytest.approx([2.0, 2.0, 0.5])


def test_manager_sessions_and_exports(scenario_path, tmp_path):
    scenario = load_scenario(scenario_path("lollipop.json"))
    manager = SimulationManager()
    manager.add_result({"summary": {"ignored": True}})
    assert manager.payload() == {}

    manager.start_session("check", scenario)
    manager.add_result(ScenarioWorker(scenario, "check").run())
    manager.end_session()
    with pytest.raises(ReportIoError):
        manager.export_to_csv(tmp_path / "none.csv")

    worker = ScenarioWorker(scenario, "transport")
    worker.set_parameters(t_final=0.2)
    manager.start_session("transport", scenario)
    manager.add_result(worker.run())
    manager.end_session()

    assert len(manager.history) == 2
    first = manager.payload(manager.history[0])
    assert first["command"] == "check"
    assert "ignored" not in first

    path = tmp_path / "nested" / "lollipop.csv"
    manager.export_to_csv(path)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == TRANSPORT_COLUMNS
    assert len(rows) - 1 == len(manager.last_session()["rows"])

    manager.export_to_json(tmp_path / "summary.json")
    document = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert document["scenario_hash"] == scenario.hash
    assert document["command"] == "transport"
