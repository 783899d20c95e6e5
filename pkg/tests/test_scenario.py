import numpy as np
import pytest

from conftest import SCENARIOS
from core.errors import SchemaError
from core.models import MutationModel, SynapticModel
from core.scenario import build_initial, load_scenario, parse_scenario
from utils.helper import get_available_scenarios

C3_GRAPH = {
    "vertices": 3,
    "edges": [{"head": 1, "tail": 0}, {"head": 2, "tail": 1}, {"head": 0, "tail": 2}],
}


def test_defaults_are_filled_in():
    scenario = parse_scenario({"graph": C3_GRAPH})
    assert scenario.conditions == "transport-standard"
    assert scenario.solver["h"] == 0.01
    assert scenario.solver["scheme"] == "be"
    assert scenario.coefficients.edgewise_constant
    assert scenario.initial["type"] == "constant"
    assert scenario.m == 3


def test_canonical_document_round_trips():
    scenario = parse_scenario({"name": "c3", "graph": C3_GRAPH, "solver": {"h": 0.02}})
    again = parse_scenario(scenario.to_dict())
    assert again.hash == scenario.hash
    assert again.solver == scenario.solver


def test_hash_ignores_key_order():
    a = parse_scenario({"graph": C3_GRAPH, "solver": {"h": 0.02, "dt": 0.01}})
    b = parse_scenario({"solver": {"dt": 0.01, "h": 0.02}, "graph": C3_GRAPH})
    assert a.hash == b.hash


@pytest.mark.parametrize(
    "patch",
    [
        {"solver": {"h": -0.1}},
        {"solver": {"cells": 2.5}},
        {"solver": {"step": 0.1}},
        {"solver": {"scheme": "rk4"}},
        {"conditions": "dirichlet"},
        {"coefficients": {"edges": [1.0, 2.0]}},
        {"initial": {"type": "gaussian"}},
        {"initial": {"type": "piecewise", "edges": [{"values": [1.0]}]}},
        {"model": {"type": "synaptic", "preset": "four-pool"}},
        {"model": {"type": "epidemic"}},
        {"aggregation": {"mode": "stochastic"}},
    ],
)
def test_schema_errors(patch):
    document = {"graph": C3_GRAPH}
    document.update(patch)
    with pytest.raises(SchemaError):
        parse_scenario(document)


def test_graph_is_required():
    with pytest.raises(SchemaError):
        parse_scenario({"solver": {"h": 0.1}})


def test_preset_brings_its_graph():
    scenario = parse_scenario({"model": {"type": "synaptic", "preset": "three-pool"},
                               "conditions": "diffusion-robin"})
    assert isinstance(scenario.model, SynapticModel)
    assert scenario.graph.m == 3
    assert scenario.document["graph"]["vertices"] == 3
    assert scenario.coefficients.kind == "a"


def test_piecewise_initial_data():
    f = build_initial({"type": "piecewise", "edges": [{"breaks": [0.5], "values": [1.0, 0.0]}]}, 1)
    np.testing.assert_array_equal(f(0, np.array([0.25, 0.75])), [1.0, 0.0])


def test_cosine_initial_data():
    f = build_initial({"type": "cosine", "amplitude": 2.0, "offset": 1.0, "signs": [1.0, -1.0]}, 2)
    s = np.array([0.0, 1.0])
    np.testing.assert_allclose(f(0, s), [3.0, -1.0])
    np.testing.assert_allclose(f(1, s), [-1.0, 3.0])


def test_sampled_and_constant_initial_data():
    f = build_initial({"type": "samples", "edges": [[0.0, 2.0]]}, 1)
    np.testing.assert_allclose(f(0, np.array([0.5])), [1.0])
    g = build_initial({"type": "constant", "values": [1.0, 4.0]}, 2)
    np.testing.assert_allclose(g(1, np.zeros(3)), 4.0)
    with pytest.raises(SchemaError):
        build_initial({"type": "samples", "edges": [[1.0]]}, 1)


def test_random_initial_data_follows_the_seed():
    spec = {"type": "random", "low": 0.0, "high": 1.0, "seed": 3}
    s = np.linspace(0.0, 1.0, 9)
    first = build_initial(spec, 2)
    second = build_initial(spec, 2)
    np.testing.assert_array_equal(first(1, s), second(1, s))
    other = build_initial(spec, 2, seed=4)
    assert not np.array_equal(first(1, s), other(1, s))
    assert np.all((first(0, s) >= 0.0) & (first(0, s) <= 1.0))


def test_shipped_scenarios_parse():
    paths = get_available_scenarios(SCENARIOS)
    assert len(paths) >= 8
    for path in paths:
        scenario = load_scenario(path)
        assert scenario.graph.m >= 2


def test_mutation_scenario(scenario_path):
    scenario = load_scenario(scenario_path("mutation.json"))
    assert isinstance(scenario.model, MutationModel)
    np.testing.assert_allclose(scenario.model.B_w.sum(axis=0), 1.0)
