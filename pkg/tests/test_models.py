from dataclasses import replace

import numpy as np
import pytest

from core.errors import (
    NegativeEntryError,
    NotColumnStochasticError,
    NotStronglyConnectedError,
    SchemaError,
    SupportMismatchError,
    WeightSupportMismatchError,
)
from core.graph_core import build_graph, line_matrices, multiplicity_zero_kirchhoff
from core.models import (
    SynapticRates,
    adjacent_edges,
    build_K_blocks,
    build_mutation_model,
    build_synaptic_model,
    check_markov,
    habituation_demo,
    line_kirchhoff,
    ring_rates,
    three_pool_preset,
    two_pool_preset,
)
from core.transport import diagnostics, evolve, init_state

C3_SHIFT = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]


def test_mutation_model_on_c3(c3):
    model = build_mutation_model(C3_SHIFT, np.zeros((3, 3)), c3)
    np.testing.assert_array_equal(model.B_w, line_matrices(c3).B_w)
    assert np.min(np.abs(np.linalg.eigvals(model.B_w) - 1.0)) <= 1e-10
    boundary = model.boundary()
    assert boundary.is_group


def test_mutation_model_conserves_positive_mass(c3):
    K = [[0.0, 0.9, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]
    Q = [[0.0, 0.1, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    model = build_mutation_model(K, Q, c3)
    state = init_state(c3, model.boundary(), model.velocities(), [1.0, 2.0, 3.0], 0.05)
    total = diagnostics(state).mass
    later = evolve(state, 4.0)
    report = diagnostics(later)
    assert abs(report.mass - total) <= 1e-10 * total
    assert report.min_value > 0.0


def test_mutation_model_validation(c3):
    with pytest.raises(NotColumnStochasticError):
        build_mutation_model(C3_SHIFT, 0.1 * np.eye(3))
    with pytest.raises(NegativeEntryError):
        build_mutation_model(np.array(C3_SHIFT) * 1.5, -0.5 * np.array(C3_SHIFT))
    with pytest.raises(WeightSupportMismatchError):
        build_mutation_model(np.array(C3_SHIFT).T, np.zeros((3, 3)), c3)
    # no graph: any column-stochastic pair is admissible
    assert build_mutation_model(np.array(C3_SHIFT).T, np.zeros((3, 3))).m == 3


def test_adjacent_edges(c3):
    # e0 runs 1 -> 0: its tail meets e2 at e2(1), its head meets e1 at e1(0)
    assert adjacent_edges(c3, 0, 0) == [(2, 1)]
    assert adjacent_edges(c3, 0, 1) == [(1, 0)]


def test_K_blocks_on_two_edges():
    # e0(0) = e1(1) at vertex 0, e0(1) = e1(0) at vertex 1
    g = build_graph(2, [(1, 0), (0, 1)])
    rates = SynapticRates(
        l=np.array([2.0, 3.0]),
        r=np.array([5.0, 7.0]),
        l_pair=np.array([[0.0, 2.0], [3.0, 0.0]]),
        r_pair=np.array([[0.0, 5.0], [7.0, 0.0]]),
    )
    blocks = build_K_blocks(rates, g)
    np.testing.assert_array_equal(blocks.K00, np.diag([-5.0, -7.0]))
    np.testing.assert_array_equal(blocks.K01, [[0.0, 5.0], [7.0, 0.0]])
    np.testing.assert_array_equal(blocks.K10, [[0.0, -2.0], [-3.0, 0.0]])
    np.testing.assert_array_equal(blocks.K11, np.diag([2.0, 3.0]))
    assert blocks.full.shape == (4, 4)
    assert check_markov(rates)


def test_zero_rates_give_neumann_blocks(c3):
    zero = np.zeros((3, 3))
    blocks = build_K_blocks(SynapticRates(np.zeros(3), np.zeros(3), zero, zero), c3)
    np.testing.assert_array_equal(blocks.full, np.zeros((6, 6)))


def test_rate_support_must_match_adjacency(c3):
    rates = ring_rates(c3)
    l_pair = rates.l_pair.copy()
    # e0(1) only meets e1
    l_pair[0, 2] = 1.0
    bad = replace(rates, l_pair=l_pair)
    with pytest.raises(SupportMismatchError):
        build_K_blocks(bad, c3)


def test_markov_check():
    rates = ring_rates(build_graph(3, [(1, 0), (2, 1), (0, 2)]))
    assert check_markov(rates)
    assert not check_markov(replace(rates, l=rates.l * np.array([1.5, 1.0, 1.0])))
    zero = np.zeros((2, 2))
    assert check_markov(SynapticRates(np.zeros(2), np.zeros(2), zero, zero))


def test_three_pool_preset():
    model = three_pool_preset()
    assert model.names == ("large", "small", "immediate")
    assert model.is_markov
    np.testing.assert_allclose(model.K_minus @ np.ones(3), 0.0, atol=1e-14)
    assert multiplicity_zero_kirchhoff(model.K_minus) == 1
    np.testing.assert_allclose(line_kirchhoff(model).K_minus, model.K_minus, atol=1e-14)
    np.testing.assert_allclose(model.aggregated_generator, model.K_minus)
    assert model.conserves_mass


def test_kirchhoff_from_exchange_matches_blocks_for_general_balanced_rates(c3):
    rates = SynapticRates.from_spec(
        {
            "l_pair": [[0.0, 0.5, 0.0], [0.0, 0.0, 2.0], [1.0, 0.0, 0.0]],
            "r_pair": [[0.0, 0.0, 1.5], [0.25, 0.0, 0.0], [0.0, 1.0, 0.0]],
        },
        3,
    )
    model = build_synaptic_model(rates, c3)
    assert model.is_markov
    np.testing.assert_allclose(line_kirchhoff(model).K_minus, model.K_minus, atol=1e-14)
    np.testing.assert_allclose(model.D_w_minus, np.diag([2.0, 2.25, 2.0]))

    # exit and entry rates differ at vertex 1, so constants stay put but mass moves
    np.testing.assert_allclose(model.density_flux, -model.blocks.full)
    np.testing.assert_allclose(model.density_flux @ np.ones(6), 0.0, atol=1e-14)
    assert not model.conserves_mass
    np.testing.assert_allclose(model.aggregated_generator @ np.ones(3), 0.0, atol=1e-14)


def test_density_flux_signs_give_outflow(c3):
    model = build_synaptic_model(ring_rates(c3, value=2.0), c3)
    C = model.density_flux
    m = 3
    # u'(0) = r u(0) - ..., u'(1) = -l u(1) + ...
    np.testing.assert_allclose(np.diag(C[:m, :m]), model.rates.r)
    np.testing.assert_allclose(np.diag(C[m:, m:]), -model.rates.l)
    off = C - np.diag(np.diag(C))
    assert np.all(off[:m] <= 0.0)
    assert np.all(off[m:] >= 0.0)


def test_synaptic_model_needs_strong_connectivity(lollipop, c3, caplog):
    with pytest.raises(NotStronglyConnectedError):
        build_synaptic_model(ring_rates(lollipop), lollipop)

    sparse = replace(ring_rates(c3), l_pair=np.zeros((3, 3)), l=np.zeros(3))
    with caplog.at_level("WARNING"):
        build_synaptic_model(sparse, c3)
    assert "Zero exchange rate" in caplog.text
    with pytest.raises(SupportMismatchError):
        build_synaptic_model(sparse, c3, strict=True)


def test_pool_names():
    model = two_pool_preset()
    assert model.edge_index("immediate") == 1
    with pytest.raises(SchemaError):
        model.edge_index("readily-releasable")


def test_habituation_depletes_the_immediate_pool():
    result = habituation_demo(three_pool_preset(), impulses=5, period=0.2, cells=16, dt=1e-3)
    assert len(result.responses) == 5
    assert all(b < a for a, b in zip(result.responses, result.responses[1:]))
    assert all(b < a for a, b in zip(result.shares, result.shares[1:]))
    assert result.times[-1] == pytest.approx(0.8)
