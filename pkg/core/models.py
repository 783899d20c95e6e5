"""
Models - genetic mutation flows and synaptic vesicle pools
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from core.coefficients import CoefficientField
from core.diffusion import assemble, evolve_diffusion, initial_state
from core.errors import (
    NegativeEntryError,
    NotColumnStochasticError,
    NotStronglyConnectedError,
    SchemaError,
    ShapeMismatchError,
    SupportMismatchError,
    WeightSupportMismatchError,
)
from core.generation import robin_boundary, transport_boundary
from core.graph_core import analyze_structure, build_graph, kirchhoff_from_adjacency

logger = logging.getLogger(__name__)

STOCHASTIC_TOLERANCE = 1e-12
BALANCE_TOLERANCE = 1e-12

THREE_POOL_NAMES = ("large", "small", "immediate")


@dataclass(frozen=True, eq=False)
class MutationModel:
    """Mitosis matrix K and mutation matrix Q; transport runs with B_w = K + Q and c = 1"""
    K: np.ndarray
    Q: np.ndarray
    graph: Optional[object] = None

    @property
    def m(self):
        return self.K.shape[0]

    @property
    def B_w(self):
        return self.K + self.Q

    def velocities(self):
        return CoefficientField.constant(self.m, 1.0, kind="c")

    def boundary(self):
        """TransportBoundary on the realizing graph, or the bare matrix without one"""
        if self.graph is None:
            return self.B_w
        return transport_boundary(self.graph, self.velocities(), self.B_w)

    def to_dict(self):
        return {"type": "mutation", "K": self.K.tolist(), "Q": self.Q.tolist()}


def build_mutation_model(K, Q, graph=None):
    """
    Validate a mutation model

    Args:
        K: m x m mitosis matrix
        Q: m x m mutation matrix
        graph: Optional MetricGraph whose line adjacency must contain the support of K + Q

    Returns:
        MutationModel
    """
    K = np.asarray(K, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or Q.shape != K.shape:
        raise ShapeMismatchError(f"K and Q must be equal square matrices, got {K.shape} and {Q.shape}")
    if np.any(K < 0) or np.any(Q < 0):
        raise NegativeEntryError("Mitosis and mutation matrices must be nonnegative")
    sums = (K + Q).sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOLERANCE)
    if bad.size:
        raise NotColumnStochasticError(f"Column {int(bad[0])} of K + Q sums to {sums[bad[0]]:.12g}")

    if graph is not None:
        if graph.m != K.shape[0]:
            raise ShapeMismatchError(f"Graph has {graph.m} edges, model {K.shape[0]}")
        for j, k in zip(*np.nonzero(K + Q)):
            if graph.tails[k] != graph.heads[j]:
                raise WeightSupportMismatchError(
                    f"Entry ({int(j)}, {int(k)}) links edges that do not meet head to tail"
                )
    return MutationModel(K=K, Q=Q, graph=graph)


@dataclass(frozen=True, eq=False)
class SynapticRates:
    """
    Exit rates l_i (at e_i(1)) and r_i (at e_i(0)); l_pair[i, j] and r_pair[i, j]
    are the entry rates into e_j from those endpoints
    """
    l: np.ndarray
    r: np.ndarray
    l_pair: np.ndarray
    r_pair: np.ndarray

    @property
    def m(self):
        return self.l.size

    @classmethod
    def from_spec(cls, spec, m):
        try:
            l_pair = np.asarray(spec["l_pair"], dtype=float).reshape(m, m)
            r_pair = np.asarray(spec["r_pair"], dtype=float).reshape(m, m)
        except (KeyError, ValueError, TypeError) as e:
            raise SchemaError(f"Synaptic rates need m x m 'l_pair' and 'r_pair': {e}")
        l = np.asarray(spec.get("l", l_pair.sum(axis=1)), dtype=float)
        r = np.asarray(spec.get("r", r_pair.sum(axis=1)), dtype=float)
        if l.shape != (m,) or r.shape != (m,):
            raise SchemaError(f"Exit rates 'l' and 'r' must have {m} entries")
        return cls(l=l, r=r, l_pair=l_pair, r_pair=r_pair)

    def to_dict(self):
        return {
            "l": self.l.tolist(),
            "r": self.r.tolist(),
            "l_pair": self.l_pair.tolist(),
            "r_pair": self.r_pair.tolist(),
        }


@dataclass(frozen=True, eq=False)
class KBlocks:
    K00: np.ndarray
    K01: np.ndarray
    K10: np.ndarray
    K11: np.ndarray

    @property
    def full(self):
        """2m x 2m matrix [[K00, K01], [K10, K11]] acting on (f(0), f(1))"""
        return np.block([[self.K00, self.K01], [self.K10, self.K11]])

    @property
    def K_minus(self):
        return self.K10 + self.K11 - self.K00 - self.K01

    @property
    def density_flux(self):
        """
        Matrix C = -[[K00, K01], [K10, K11]] with (u'(0), u'(1)) = C (u(0), u(1))

        Exit terms act as outflow at both endpoints; for balanced rates C has zero row sums,
        so constants are stationary.
        """
        return -self.full


def adjacent_edges(g, j, q):
    """Edges other than j touching the endpoint e_j(q), with the endpoint they touch it at"""
    v = g.endpoint(j, q)
    touching = []
    for k in g.incident_edges(v):
        if k == j:
            continue
        touching.append((k, 0 if g.tails[k] == v else 1))
    return touching


def build_K_blocks(rates, g):
    """
    Vertex exchange blocks K^{pq} of the Fick conditions

    k00_ii = -r_i, k0q_ij = r_ij when e_i(0) = e_j(q);
    k11_ii = l_i, k1q_ij = -l_ij when e_i(1) = e_j(q).

    Args:
        rates: SynapticRates
        g: MetricGraph

    Returns:
        KBlocks
    """
    m = g.m
    if rates.m != m or rates.l_pair.shape != (m, m) or rates.r_pair.shape != (m, m):
        raise ShapeMismatchError(f"Rates must describe {m} edges")
    for name, values in (("l", rates.l), ("r", rates.r), ("l_pair", rates.l_pair), ("r_pair", rates.r_pair)):
        if np.any(values < 0):
            raise NegativeEntryError(f"Rates '{name}' must be nonnegative")

    blocks = {key: np.zeros((m, m)) for key in ("00", "01", "10", "11")}
    blocks["00"][np.diag_indices(m)] = -rates.r
    blocks["11"][np.diag_indices(m)] = rates.l

    for p, pair, sign in ((0, rates.r_pair, 1.0), (1, rates.l_pair, -1.0)):
        for i in range(m):
            endpoint_of = dict(adjacent_edges(g, i, p))
            for j in np.flatnonzero(pair[i]):
                j = int(j)
                if j not in endpoint_of:
                    raise SupportMismatchError(
                        f"Rate {'r' if p == 0 else 'l'}_({i},{j}) links edges that do not share e_{i}({p})"
                    )
                blocks[f"{p}{endpoint_of[j]}"][i, j] += sign * pair[i, j]

    return KBlocks(K00=blocks["00"], K01=blocks["01"], K10=blocks["10"], K11=blocks["11"])


def check_markov(rates):
    """True when sum_k l_ik = l_i and sum_k r_ik = r_i for every edge"""
    return bool(
        np.all(np.abs(rates.l_pair.sum(axis=1) - rates.l) <= BALANCE_TOLERANCE)
        and np.all(np.abs(rates.r_pair.sum(axis=1) - rates.r) <= BALANCE_TOLERANCE)
    )


@dataclass(frozen=True, eq=False)
class SynapticModel:
    graph: object
    rates: SynapticRates
    blocks: KBlocks
    names: Tuple[str, ...] = field(default=())

    @property
    def m(self):
        return self.graph.m

    @property
    def K_minus(self):
        return self.blocks.K_minus

    @property
    def B_w_minus(self):
        """Line adjacency of the exchange: entry (j, i) = l_ij + r_ij"""
        return (self.rates.l_pair + self.rates.r_pair).T

    @property
    def D_w_minus(self):
        return np.diag(self.rates.l + self.rates.r)

    @property
    def density_flux(self):
        return self.blocks.density_flux

    @property
    def aggregated_generator(self):
        """
        L = K_minus with d/dt (edge masses) = -L (edge masses) in the fast-diffusion limit

        Balanced rates give L 1 = 0; the left kernel vector e is the conserved pairing.
        """
        return self.K_minus

    @property
    def is_markov(self):
        return check_markov(self.rates)

    @property
    def conserves_mass(self):
        """Every endpoint receives what it emits: 1^T (K00 - K10) = 1^T (K01 - K11) = 0"""
        b = self.blocks
        defect = np.concatenate([(b.K00 - b.K10).sum(axis=0), (b.K01 - b.K11).sum(axis=0)])
        return bool(np.all(np.abs(defect) <= BALANCE_TOLERANCE))

    def diffusivities(self, value=1.0):
        return CoefficientField.constant(self.m, value, kind="a")

    def boundary(self, scale=1.0):
        return robin_boundary(scale * self.density_flux)

    def edge_index(self, pool):
        if isinstance(pool, str):
            if pool not in self.names:
                raise SchemaError(f"Unknown pool {pool!r}; pools are {list(self.names)}")
            return self.names.index(pool)
        return int(pool)

    def to_dict(self):
        data = {"type": "synaptic", "rates": self.rates.to_dict()}
        if self.names:
            data["names"] = list(self.names)
        return data


def build_synaptic_model(rates, g, names=(), strict=False):
    """
    Validate a synaptic exchange model on a strongly connected graph

    Args:
        rates: SynapticRates
        g: MetricGraph
        names: Optional pool names per edge
        strict: Reject zero rates between adjacent edges instead of warning

    Returns:
        SynapticModel
    """
    report = analyze_structure(g)
    if len(report.strong_components) != 1 or report.sinks or report.sources:
        raise NotStronglyConnectedError(
            f"Synaptic graph must be strongly connected; components {[list(c) for c in report.strong_components]}"
        )
    blocks = build_K_blocks(rates, g)

    for i in range(g.m):
        for p, pair in ((0, rates.r_pair), (1, rates.l_pair)):
            for j, _ in adjacent_edges(g, i, p):
                if pair[i, j] == 0:
                    message = f"Zero exchange rate from e_{i}({p}) into adjacent edge {j}"
                    if strict:
                        raise SupportMismatchError(message)
                    logger.warning(message)

    if names and len(names) != g.m:
        raise SchemaError(f"{len(names)} pool names for {g.m} edges")
    if not check_markov(rates):
        logger.warning("Exchange rates are not balanced: constant densities are not stationary")
    model = SynapticModel(graph=g, rates=rates, blocks=blocks, names=tuple(names))
    if not model.conserves_mass:
        logger.debug("Exchange rates do not conserve total pool mass")
    return model


def ring_rates(g, value=1.0):
    """Unit-style rates where every endpoint exchanges equally with all its neighbours"""
    m = g.m
    l_pair = np.zeros((m, m))
    r_pair = np.zeros((m, m))
    for i in range(m):
        for p, pair in ((0, r_pair), (1, l_pair)):
            touching = adjacent_edges(g, i, p)
            for j, _ in touching:
                pair[i, j] = value / len(touching)
    return SynapticRates(l=l_pair.sum(axis=1), r=r_pair.sum(axis=1), l_pair=l_pair, r_pair=r_pair)


def two_pool_preset():
    """Two pools on a 2-cycle with unit rates"""
    g = build_graph(2, [(1, 0), (0, 1)])
    return build_synaptic_model(ring_rates(g), g, names=("reserve", "immediate"))


def three_pool_preset():
    """Large, small and immediately available pools on a directed triangle with unit rates"""
    g = build_graph(3, [(1, 0), (2, 1), (0, 2)])
    return build_synaptic_model(ring_rates(g), g, names=THREE_POOL_NAMES)


@dataclass(frozen=True)
class HabituationResult:
    times: Tuple[float, ...]
    responses: Tuple[float, ...]
    shares: Tuple[float, ...]

    def to_dict(self):
        return {"times": list(self.times), "responses": list(self.responses), "shares": list(self.shares)}


def habituation_demo(model, impulses=6, period=0.5, fraction=0.5, pool="immediate",
                     cells=32, dt=1e-3, initial=1.0):
    """
    Repeated release from one pool between diffusion runs

    Each impulse removes a fixed fraction of the pool's content; the removed amount
    is the response.

    Args:
        model: SynapticModel
        impulses: Number of impulses
        period: Time between impulses
        fraction: Share of the pool released per impulse
        pool: Pool name or edge index
        cells: Interior grid nodes per edge
        dt: Time step
        initial: Initial density (constant or per-edge)

    Returns:
        HabituationResult with the response and the pool's share of total mass at every impulse
    """
    if not 0 < fraction < 1:
        raise SchemaError(f"Release fraction must lie in (0, 1), got {fraction}")
    index = model.edge_index(pool)
    gen = assemble(model.graph, model.diffusivities(), model.boundary(), cells)
    state = initial_state(gen, initial, dt=dt)
    stride = gen.nodes_per_edge

    times, responses, shares = [], [], []
    for k in range(impulses):
        masses = gen.edge_masses(state.values)
        responses.append(float(fraction * masses[index]))
        values = state.values.copy()
        values[index * stride:(index + 1) * stride] *= 1.0 - fraction
        state = replace(state, values=values)
        after = gen.edge_masses(values)
        shares.append(float(after[index] / after.sum()))
        times.append(state.t)
        if k < impulses - 1:
            state = evolve_diffusion(gen, state, period)

    logger.info("Habituation: responses %s", ", ".join(f"{r:.4g}" for r in responses))
    return HabituationResult(times=tuple(times), responses=tuple(responses), shares=tuple(shares))


def line_kirchhoff(model):
    """Kirchhoff matrix assembled from the exchange adjacency; equals K_minus for balanced rates"""
    return kirchhoff_from_adjacency(model.B_w_minus)
