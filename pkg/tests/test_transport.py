import functools
import math

import numpy as np
import pytest

from conftest import random_cycle_graph
from core.coefficients import CoefficientField
from core.errors import IncommensurableLengthsError, NonGridTimeError, ShapeMismatchError
from core.generation import transport_boundary
from core.graph_core import analyze_structure
from core.spectral import classify_long_term
from core.transport import (
    choose_grid,
    diagnostics,
    edge_masses,
    evolve,
    extinct,
    grid_steps,
    init_state,
    nilpotent_extinction,
    state_rows,
    trajectory,
    travel_time,
)


def start(g, f, h, c=None, strict=False):
    c = c or CoefficientField.constant(g.m, 1.0)
    return init_state(g, transport_boundary(g, c), c, f, h, strict=strict)


def smooth(j, s):
    return 1.0 + 0.5 * np.sin(2.0 * np.pi * s + j) + 0.25 * s**2


def test_c3_is_periodic_with_period_three(c3, rng):
    tables = [rng.uniform(0.0, 1.0, 17) for _ in range(3)]
    state = start(c3, tables, 1.0 / 300)
    assert state.cells == (300, 300, 300)
    later = evolve(state, 3.0)
    distance = sum(float(np.dot(np.abs(u - v), w))
                   for u, v, w in zip(later.samples, state.samples, state.widths))
    assert distance <= 1e-12
    assert later.t == pytest.approx(3.0)


def test_block_stepping_matches_single_steps(figure_eight):
    state = start(figure_eight, smooth, 0.1)
    blocked = evolve(state, 2.5)
    stepped = state
    for _ in range(25):
        stepped = evolve(stepped, 0.1)
    for u, v in zip(blocked.samples, stepped.samples):
        np.testing.assert_allclose(u, v, rtol=0, atol=1e-14)
    assert blocked.steps == stepped.steps == 25


def test_lollipop_tail_empties_after_one_time_unit(lollipop):
    state = start(lollipop, smooth, 0.05)
    report = analyze_structure(lollipop)
    assert nilpotent_extinction(report, state) == 1.0
    assert not extinct(state, report.acyclic_edges)
    for current in trajectory(state, 3.0, every=3)[1:]:
        if current.t > 1.0:
            assert extinct(current, report.acyclic_edges)
            assert np.all(current.samples[0] == 0.0)


def l1_distance(a, b):
    return sum(float(np.dot(np.abs(u - v), w)) for u, v, w in zip(a.samples, b.samples, a.widths))


def test_lollipop_repeats_with_the_cycle_period_after_extinction(lollipop):
    long_term = classify_long_term(lollipop, CoefficientField.constant(lollipop.m, 1.0))
    (terminal,) = long_term.terminal
    tau = float(terminal.period)
    state = start(lollipop, smooth, 0.05)
    for t in (1.05, 1.5, 2.25):
        current = evolve(state, t)
        later = evolve(current, tau)
        assert l1_distance(later, current) <= 1e-10
        # a third of the cycle is not a period
        assert l1_distance(evolve(current, tau / 3), current) > 1e-3


def test_incommensurable_figure_eight_settles(figure_eight, caplog):
    c = CoefficientField.from_values([1.0 / math.sqrt(2.0), 1.0, 1.0, 1.0, 1.0])
    (terminal,) = classify_long_term(figure_eight, c).terminal
    assert terminal.behaviour == "convergent"

    with caplog.at_level("WARNING"):
        state = start(figure_eight, smooth, 0.02, c=c)
    assert "snapped" in caplog.text
    assert state.cells[0] == 71
    # one time unit apart; the scheme is an L1 contraction, so the gap cannot grow
    states = trajectory(state, 60.0, every=50)
    gaps = [l1_distance(b, a) for a, b in zip(states, states[1:])]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.5 * gaps[0]


def test_mass_conservation_on_random_graphs(rng):
    for _ in range(10):
        g = random_cycle_graph(rng)
        c = CoefficientField.from_values(rng.choice([0.5, 1.0, 2.0], size=g.m))
        state = start(g, lambda j, s: 1.0 + np.cos(3.0 * s + j), 0.05, c=c)
        total = diagnostics(state).mass
        for _ in range(200):
            state = evolve(state, state.h)
            current = diagnostics(state)
            assert current.kirchhoff_residual <= 1e-12
        assert abs(current.mass - total) / total <= 1e-10
        assert state.t == pytest.approx(10.0)


def test_positivity_is_exact(rng):
    for _ in range(100):
        g = random_cycle_graph(rng, n_max=4, m_max=6)
        tables = [rng.uniform(0.0, 1.0, 5) * (rng.random() < 0.8) for _ in range(g.m)]
        state = start(g, tables, 0.25)
        later = evolve(state, 2.0)
        assert diagnostics(later).min_value >= 0.0


def backward_tracer(boundary, lengths, velocities, f):
    """Exact solution by following characteristics back to t = 0"""

    @functools.lru_cache(maxsize=None)
    def outflow(k, tau):
        return value(k, 0.0, tau)

    def value(j, y, t):
        if y + t < lengths[j]:
            return float(f(j, (y + t) * velocities[j]))
        entered = t - (lengths[j] - y)
        return sum(boundary[j, k] * outflow(k, entered)
                   for k in range(len(lengths)) if boundary[j, k] != 0.0)

    return value


@pytest.mark.parametrize("m", [1, 2, 3])
def test_evolve_matches_characteristic_tracer(m, rng):
    for _ in range(5):
        B = rng.uniform(0.0, 1.0, (m, m)) * (rng.random((m, m)) < 0.7)
        speeds = rng.choice([1.0, 2.0], size=m)
        c = CoefficientField.from_values(speeds)
        state = init_state(None, B, c, smooth, 0.125)
        assert max(state.cells) <= 8

        tracer = backward_tracer(B, [1.0 / v for v in speeds], speeds, smooth)
        for current in trajectory(state, 3.0, every=4):
            for j in range(m):
                y = (np.arange(current.cells[j]) + 0.5) * current.h
                exact = np.array([tracer(j, yi, current.t) for yi in y])
                np.testing.assert_allclose(current.samples[j], exact, rtol=0, atol=1e-12)


def test_common_grid_for_commensurable_lengths():
    h, h_exact, cells, snap = choose_grid([1.0, 0.5], 0.3)
    assert h == 0.25
    assert str(h_exact) == "1/4"
    assert cells == (4, 2)
    assert snap == 0.0


def test_reconstructed_lengths_report_their_offset():
    h, h_exact, cells, snap = choose_grid([1.0, 0.5 + 1e-10], 0.3)
    assert str(h_exact) == "1/4"
    assert cells == (4, 2)
    assert snap == pytest.approx(1e-10, rel=1e-5)


def test_incommensurable_lengths(caplog):
    lengths = [1.0, math.sqrt(2.0)]
    with pytest.raises(IncommensurableLengthsError):
        choose_grid(lengths, 0.1, strict=True)
    with caplog.at_level("WARNING"):
        h, h_exact, cells, snap = choose_grid(lengths, 0.1)
    assert h_exact is None
    assert cells == (10, 14)
    assert snap == pytest.approx(math.sqrt(2.0) - 1.4)
    assert "snapped" in caplog.text


def test_non_grid_time(c3):
    state = start(c3, 1.0, 0.01)
    assert grid_steps(state, 0.5) == 50
    with pytest.raises(NonGridTimeError):
        evolve(state, 0.013)


def test_boundary_shape_is_checked():
    c = CoefficientField.constant(2, 1.0)
    with pytest.raises(ShapeMismatchError):
        init_state(None, np.eye(3), c, 1.0, 0.1)


def test_travel_time_of_tabulated_velocity():
    c = CoefficientField.from_values([np.linspace(1.0, 2.0, 201)])
    travel = travel_time(c)
    assert travel.lengths[0] == pytest.approx(math.log(2.0), rel=1e-5)
    s = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(travel.inverse(0, travel.phi(0, s)), s, atol=1e-12)


def test_edge_masses_of_constants(c3):
    state = start(c3, 2.0, 0.1)
    np.testing.assert_allclose(edge_masses(state), 2.0)


def test_state_rows_layout(c3):
    state = start(c3, 1.0, 0.25)
    rows = state_rows(state)
    assert len(rows) == 12
    t, edge, cell, s, u = rows[0]
    assert (t, edge, cell) == (0.0, 0, 0)
    assert s == pytest.approx(0.125)
    assert u == 1.0
