import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from core.graph_core import build_graph  # noqa: E402
from core.models import SynapticRates  # noqa: E402

SCENARIOS = os.path.join(ROOT, "scenarios")


def random_cycle_graph(rng, n_max=6, m_max=10):
    """Random sink- and source-free graph: a Hamiltonian cycle plus extra chords"""
    n = int(rng.integers(2, n_max + 1))
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[(i + 1) % n])) for i in range(n)]
    existing = set(edges)
    for _ in range(int(rng.integers(0, m_max - len(edges) + 1))):
        u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
        if (u, v) not in existing:
            existing.add((u, v))
            edges.append((u, v))
    return build_graph(n, edges)


def random_connected_graph(rng, n_max=6, m_max=10):
    """Random connected graph with arbitrary orientation: a random tree plus chords"""
    n = int(rng.integers(2, n_max + 1))
    edges = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.append((u, v) if rng.random() < 0.5 else (v, u))
    existing = set(edges)
    for _ in range(int(rng.integers(0, m_max - len(edges) + 1))):
        u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
        if (u, v) not in existing:
            existing.add((u, v))
            edges.append((u, v))
    return build_graph(n, edges)


@pytest.fixture
def c3():
    """Directed triangle: e0 runs 1 -> 0, e1 runs 2 -> 1, e2 runs 0 -> 2"""
    return build_graph(3, [(1, 0), (2, 1), (0, 2)])


@pytest.fixture
def two_cycle():
    return build_graph(2, [(1, 0), (0, 1)])


@pytest.fixture
def lollipop():
    """Triangle 1 -> 2 -> 3 -> 1 fed by the acyclic edge 0 -> 1"""
    return build_graph(4, [(0, 1), (1, 2), (2, 3), (3, 1)])


@pytest.fixture
def star3():
    """Center 0 with three edges leaving it"""
    return build_graph(4, [(0, 1), (0, 2), (0, 3)])


@pytest.fixture
def figure_eight():
    """Cycles of two and three unit edges sharing vertex 0"""
    return build_graph(4, [(0, 1), (1, 0), (0, 2), (2, 3), (3, 0)])


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def scenario_path():
    def path(name):
        return os.path.join(SCENARIOS, name)
    return path


@pytest.fixture
def skewed_rates():
    """Balanced rates on the directed triangle whose exit and entry rates differ per endpoint"""
    return SynapticRates.from_spec(
        {
            "l_pair": [[0.0, 0.5, 0.0], [0.0, 0.0, 2.0], [1.0, 0.0, 0.0]],
            "r_pair": [[0.0, 0.0, 1.5], [0.25, 0.0, 0.0], [0.0, 1.0, 0.0]],
        },
        3,
    )
