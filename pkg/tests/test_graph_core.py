import numpy as np
import pytest

from conftest import random_connected_graph
from core.errors import (
    BadWeightRowError,
    CycleEnumerationOverflowError,
    DisconnectedError,
    MissingWeightsError,
    NotSimpleError,
    ShapeMismatchError,
    WeightSupportMismatchError,
)
from core.graph_core import (
    ACYCLIC,
    TERMINAL,
    TRANSIENT,
    analyze_structure,
    build_graph,
    graph_from_spec,
    incidence,
    line_matrices,
    multiplicity_zero_kirchhoff,
    sinks_and_sources,
)


def test_incidence_marks_heads_and_tails(c3):
    inc = incidence(c3)
    # e0 runs from vertex 1 (head) to vertex 0 (tail)
    assert inc.Phi_minus[1, 0] == 1
    assert inc.Phi_plus[0, 0] == 1
    assert np.all(inc.Phi_minus.sum(axis=0) == 1)
    assert np.all(inc.Phi_plus.sum(axis=0) == 1)
    np.testing.assert_array_equal(inc.Phi, inc.Phi_minus + inc.Phi_plus)


def test_default_weights_split_evenly(figure_eight):
    w = figure_eight.weights
    # vertex 0 is the head of e0 and e2
    assert w[0, 0] == pytest.approx(0.5)
    assert w[0, 2] == pytest.approx(0.5)
    assert w[1, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(w.sum(axis=1), 1.0)


def test_c3_line_matrices_are_a_permutation(c3):
    lines = line_matrices(c3)
    expected = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
    np.testing.assert_array_equal(lines.B_w, expected)
    np.testing.assert_array_equal(lines.D_w_minus, np.eye(3))
    np.testing.assert_allclose(lines.K_minus @ np.ones(3), 0.0)
    np.testing.assert_allclose(lines.K_plus, lines.K_minus.T)


def test_kirchhoff_rows_sum_to_zero_with_branching(figure_eight):
    lines = line_matrices(figure_eight)
    np.testing.assert_allclose(lines.B_w.sum(axis=0), 1.0)
    np.testing.assert_allclose(lines.K_minus.sum(axis=1), 0.0, atol=1e-15)


def test_kirchhoff_kernel_counts_terminal_components(c3, figure_eight):
    assert multiplicity_zero_kirchhoff(line_matrices(c3).K_minus) == 1
    assert multiplicity_zero_kirchhoff(line_matrices(figure_eight).K_minus) == 1
    two_triangles = build_graph(5, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 2), (2, 3)])
    assert multiplicity_zero_kirchhoff(line_matrices(two_triangles).K_minus) == 1


def test_antiparallel_pair_is_simple(two_cycle):
    assert two_cycle.m == 2
    assert two_cycle.edges == [(1, 0), (0, 1)]


@pytest.mark.parametrize(
    "edges, error",
    [
        ([(0, 0), (0, 1)], NotSimpleError),
        ([(0, 1), (0, 1)], NotSimpleError),
        ([(0, 1), (2, 3)], DisconnectedError),
    ],
)
def test_invalid_graphs_are_rejected(edges, error):
    with pytest.raises(error):
        build_graph(4 if error is DisconnectedError else 2, edges)


def test_weights_are_validated():
    edges = [(0, 1), (0, 2), (1, 0), (2, 0)]
    with pytest.raises(BadWeightRowError):
        build_graph(3, edges, weights=[[0.7, 0.7, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    with pytest.raises(WeightSupportMismatchError):
        build_graph(3, edges, weights=[[0.5, 0.5, 0.1, 0], [0, 0, 0.9, 0], [0, 0, 0, 1]])
    with pytest.raises(ShapeMismatchError):
        build_graph(3, edges, weights=[[1.0, 0.0], [0.0, 1.0]])


def test_missing_weights():
    g = build_graph(2, [(1, 0), (0, 1)], default_weights=False)
    with pytest.raises(MissingWeightsError):
        line_matrices(g)


def test_sinks_and_sources(star3, lollipop):
    sinks, sources = sinks_and_sources(star3)
    assert sinks == (1, 2, 3)
    assert sources == (0,)
    sinks, sources = sinks_and_sources(lollipop)
    assert sinks == ()
    assert sources == (0,)


def test_lollipop_structure(lollipop):
    report = analyze_structure(lollipop)
    assert report.edge_class == (ACYCLIC, TERMINAL, TERMINAL, TERMINAL)
    assert report.terminal_components == [(1, 2, 3)]
    assert report.directed_cycles == ((1, 2, 3),)
    assert not report.is_directed_cycle


def test_transient_component_feeds_terminal_one():
    # triangle e0 e1 e2 leaks through e3 into the 2-cycle e4 e5
    g = build_graph(5, [(0, 1), (1, 2), (2, 0), (0, 3), (3, 4), (4, 3)])
    report = analyze_structure(g)
    assert report.edge_class[:3] == (TRANSIENT,) * 3
    assert report.edge_class[3] == TRANSIENT
    assert report.edge_class[4:] == (TERMINAL, TERMINAL)
    assert report.transient_edges == [0, 1, 2, 3]
    assert report.acyclic_edges == []
    assert len(report.terminal_components) == 1


def test_directed_cycle_predicate(c3, figure_eight):
    assert analyze_structure(c3).is_directed_cycle
    assert not analyze_structure(figure_eight).is_directed_cycle


def test_cycle_cap(figure_eight):
    with pytest.raises(CycleEnumerationOverflowError):
        analyze_structure(figure_eight, cycle_cap=1)


def test_graph_spec_round_trip(figure_eight):
    rebuilt = graph_from_spec(figure_eight.to_spec())
    assert rebuilt.edges == figure_eight.edges
    np.testing.assert_array_equal(rebuilt.weights, figure_eight.weights)


def reachability(B_w):
    """reach[j, k] is True when a walk of length >= 1 leads from edge j to edge k"""
    step = (np.asarray(B_w) != 0).T
    reach = step.copy()
    for _ in range(step.shape[0]):
        reach = reach | ((reach.astype(int) @ step.astype(int)) > 0)
    return reach


def expected_structure(g):
    reach = reachability(line_matrices(g).B_w)
    m = g.m
    same = [[j == k or (reach[j, k] and reach[k, j]) for k in range(m)] for j in range(m)]
    components = {tuple(k for k in range(m) if same[j][k]) for j in range(m)}
    cyclic = [bool(reach[j, j]) for j in range(m)]
    terminal = [cyclic[j] and all(same[j][k] for k in range(m) if reach[j, k]) for j in range(m)]
    feeders = [i for i in range(m) if cyclic[i] and not terminal[i]]
    classes = []
    for j in range(m):
        if terminal[j]:
            classes.append(TERMINAL)
        elif any(same[i][j] or reach[i, j] for i in feeders):
            classes.append(TRANSIENT)
        else:
            classes.append(ACYCLIC)
    sinks = tuple(v for v in range(g.n) if v not in g.heads)
    sources = tuple(v for v in range(g.n) if v not in g.tails)
    return components, terminal, classes, sinks, sources


def test_structure_matches_reachability(rng):
    for _ in range(150):
        g = random_connected_graph(rng, n_max=6, m_max=8)
        components, terminal, classes, sinks, sources = expected_structure(g)
        report = analyze_structure(g)

        assert set(report.strong_components) == components
        for j in range(g.m):
            index = report.edge_component[j]
            assert j in report.strong_components[index]
            assert report.terminal_flags[index] == terminal[j]
        assert report.edge_class == tuple(classes)
        assert report.sinks == sinks
        assert report.sources == sources
