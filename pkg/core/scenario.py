"""
Scenario - parse and validate scenario documents
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.coefficients import CoefficientField
from core.errors import SchemaError, ValidationError
from core.graph_core import graph_from_spec
from core.models import (
    SynapticRates,
    build_mutation_model,
    build_synaptic_model,
    three_pool_preset,
    two_pool_preset,
)
from utils.helper import load_scenario_file, scenario_hash

logger = logging.getLogger(__name__)

CONDITIONS = ("transport-standard", "diffusion-standard", "diffusion-robin")
INITIAL_TYPES = ("constant", "piecewise", "cosine", "samples", "random")
SCHEMES = ("be", "tr")
PRESETS = {"three-pool": three_pool_preset, "two-pool": two_pool_preset}

SOLVER_DEFAULTS = {
    "h": 0.01,
    "cells": 64,
    "dt": 1e-3,
    "t_final": 1.0,
    "scheme": "be",
    "record_every": 1,
    "strict": False,
}

AGGREGATION_DEFAULTS = {
    "mode": "flow",
    "eps": [0.1, 0.05, 0.025],
    "cells": 20,
}

RANDOM_POINTS = 17


@dataclass(eq=False)
class Scenario:
    name: str
    graph: object
    coefficients: CoefficientField
    conditions: str
    solver: dict
    initial: dict
    model: Optional[object] = None
    aggregation: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    document: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.graph.m

    @property
    def hash(self):
        return scenario_hash(self.document)

    def to_dict(self):
        """Canonical document: the input with solver defaults filled in"""
        return copy.deepcopy(self.document)


def _positive(solver, key):
    value = solver[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
        raise SchemaError(f"solver.{key} must be a positive number, got {value!r}")


def _validate_solver(raw):
    if not isinstance(raw, dict):
        raise SchemaError("'solver' must be an object")
    unknown = set(raw) - set(SOLVER_DEFAULTS)
    if unknown:
        raise SchemaError(f"Unknown solver keys: {sorted(unknown)}")
    solver = dict(SOLVER_DEFAULTS)
    solver.update(raw)
    for key in ("h", "dt", "t_final"):
        _positive(solver, key)
    for key in ("cells", "record_every"):
        if not isinstance(solver[key], int) or isinstance(solver[key], bool) or solver[key] < 1:
            raise SchemaError(f"solver.{key} must be a positive integer, got {solver[key]!r}")
    if solver["scheme"] not in SCHEMES:
        raise SchemaError(f"solver.scheme must be one of {SCHEMES}, got {solver['scheme']!r}")
    if not isinstance(solver["strict"], bool):
        raise SchemaError("solver.strict must be true or false")
    return solver


def _parse_model(spec, graph, strict):
    if not isinstance(spec, dict) or "type" not in spec:
        raise SchemaError("'model' must be an object with a 'type'")
    kind = spec["type"]
    if kind == "mutation":
        try:
            K, Q = spec["K"], spec["Q"]
        except KeyError as e:
            raise SchemaError(f"Mutation model needs {e}")
        return build_mutation_model(K, Q, graph)
    if kind == "synaptic":
        if "preset" in spec:
            if spec["preset"] not in PRESETS:
                raise SchemaError(f"Unknown synaptic preset {spec['preset']!r}; known: {sorted(PRESETS)}")
            return PRESETS[spec["preset"]]()
        if graph is None:
            raise SchemaError("Synaptic rates need a 'graph'")
        if "rates" not in spec:
            raise SchemaError("Synaptic model needs 'rates' or 'preset'")
        rates = SynapticRates.from_spec(spec["rates"], graph.m)
        return build_synaptic_model(rates, graph, names=tuple(spec.get("names", ())), strict=strict)
    raise SchemaError(f"Unknown model type {kind!r}; expected 'mutation' or 'synaptic'")


def _validate_initial(spec, m):
    if not isinstance(spec, dict):
        raise SchemaError("'initial' must be an object")
    kind = spec.get("type", "constant")
    if kind not in INITIAL_TYPES:
        raise SchemaError(f"initial.type must be one of {INITIAL_TYPES}, got {kind!r}")
    if kind in ("piecewise", "samples"):
        edges = spec.get("edges")
        if not isinstance(edges, list) or len(edges) != m:
            raise SchemaError(f"initial.edges must list {m} edges")
    if kind == "constant" and "values" in spec and len(spec["values"]) != m:
        raise SchemaError(f"initial.values must have {m} entries")
    if kind == "cosine" and "signs" in spec and len(spec["signs"]) != m:
        raise SchemaError(f"initial.signs must have {m} entries")
    return dict(spec, type=kind)


def parse_scenario(data):
    """
    Build a Scenario from a parsed document

    Args:
        data: Dictionary following the scenario schema

    Returns:
        Scenario
    """
    if not isinstance(data, dict):
        raise SchemaError("Scenario must be a JSON object")
    document = copy.deepcopy(data)
    solver = _validate_solver(document.get("solver", {}))
    document["solver"] = solver

    graph = graph_from_spec(document["graph"]) if "graph" in document else None
    model = None
    if "model" in document:
        model = _parse_model(document["model"], graph, solver["strict"])
        if "preset" in document["model"]:
            graph = model.graph
            document["graph"] = graph.to_spec()
    if graph is None:
        raise SchemaError("Scenario needs a 'graph' (or a model preset that brings one)")

    conditions = document.get("conditions", "transport-standard")
    if conditions not in CONDITIONS:
        raise SchemaError(f"conditions must be one of {CONDITIONS}, got {conditions!r}")
    document["conditions"] = conditions
    kind = "c" if conditions.startswith("transport") else "a"
    coefficients = CoefficientField.from_spec(document.get("coefficients"), graph.m, kind)

    initial = _validate_initial(document.get("initial", {"type": "constant", "value": 1.0}), graph.m)
    document["initial"] = initial

    aggregation = {}
    if "aggregation" in document:
        raw = document["aggregation"]
        if not isinstance(raw, dict):
            raise SchemaError("'aggregation' must be an object")
        aggregation = dict(AGGREGATION_DEFAULTS)
        aggregation.update(raw)
        if aggregation["mode"] not in ("flow", "diffusion"):
            raise SchemaError(f"aggregation.mode must be 'flow' or 'diffusion', got {aggregation['mode']!r}")
        document["aggregation"] = aggregation

    output = document.get("output", {})
    if not isinstance(output, dict):
        raise SchemaError("'output' must be an object")

    name = str(document.get("name", "scenario"))
    logger.debug("Parsed scenario %s: %d vertices, %d edges, %s", name, graph.n, graph.m, conditions)
    return Scenario(
        name=name,
        graph=graph,
        coefficients=coefficients,
        conditions=conditions,
        solver=solver,
        initial=initial,
        model=model,
        aggregation=aggregation,
        output=output,
        document=document,
    )


def load_scenario(path):
    """Read, parse and validate a scenario file"""
    return parse_scenario(load_scenario_file(path))


def build_initial(spec, m, seed=None):
    """
    Initial data from its scenario form

    Args:
        spec: Validated initial block
        m: Number of edges
        seed: Seed for the "random" type

    Returns:
        Callable f(j, s) returning values at positions s in [0, 1]
    """
    kind = spec.get("type", "constant")
    if kind == "constant":
        values = spec.get("values", [spec.get("value", 1.0)] * m)
        values = [float(v) for v in values]
        return lambda j, s: np.full_like(np.asarray(s, dtype=float), values[j])

    if kind == "piecewise":
        pieces = []
        for edge in spec["edges"]:
            breaks = np.asarray(edge.get("breaks", []), dtype=float)
            levels = np.asarray(edge["values"], dtype=float)
            if levels.size != breaks.size + 1:
                raise SchemaError("Each piecewise edge needs one more value than breaks")
            pieces.append((breaks, levels))
        return lambda j, s: pieces[j][1][np.searchsorted(pieces[j][0], np.asarray(s, dtype=float), side="right")]

    if kind == "cosine":
        mode = float(spec.get("mode", 1))
        amplitude = float(spec.get("amplitude", 1.0))
        offset = float(spec.get("offset", 0.0))
        signs = [float(v) for v in spec.get("signs", [1.0] * m)]
        return lambda j, s: offset + signs[j] * amplitude * np.cos(mode * np.pi * np.asarray(s, dtype=float))

    if kind == "samples":
        tables = [np.asarray(edge, dtype=float) for edge in spec["edges"]]
        for table in tables:
            if table.ndim != 1 or table.size < 2:
                raise SchemaError("Sampled initial data needs at least 2 samples per edge")
        return lambda j, s: np.interp(s, np.linspace(0.0, 1.0, tables[j].size), tables[j])

    if kind == "random":
        rng = np.random.default_rng(seed if seed is not None else spec.get("seed"))
        low = float(spec.get("low", 0.0))
        high = float(spec.get("high", 1.0))
        points = int(spec.get("points", RANDOM_POINTS))
        tables = [rng.uniform(low, high, points) for _ in range(m)]
        return lambda j, s: np.interp(s, np.linspace(0.0, 1.0, points), tables[j])

    raise ValidationError(f"Unknown initial type {kind!r}")
