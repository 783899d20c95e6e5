"""
Graph Core - metric graph representation, incidence and line-graph matrices
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from core.errors import (
    BadWeightRowError,
    CycleEnumerationOverflowError,
    DisconnectedError,
    EigensolverFailureError,
    MissingWeightsError,
    NotSimpleError,
    ShapeMismatchError,
    ValidationError,
    WeightSupportMismatchError,
)

logger = logging.getLogger(__name__)

WEIGHT_ROW_TOLERANCE = 1e-12
CYCLE_CAP = 10**4
ZERO_EIGENVALUE_THRESHOLD = 1e-8

TERMINAL = "terminal"
TRANSIENT = "transient"
ACYCLIC = "acyclic"


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Oriented metric graph; material on edge j flows from head = e_j(1) to tail = e_j(0)"""
    n: int
    heads: Tuple[int, ...]
    tails: Tuple[int, ...]
    weights: Optional[np.ndarray] = None

    @property
    def m(self):
        return len(self.heads)

    @property
    def edges(self):
        return list(zip(self.heads, self.tails))

    def endpoint(self, j, q):
        """Vertex at e_j(q), q in {0, 1}"""
        return self.heads[j] if q == 1 else self.tails[j]

    def incident_edges(self, v):
        """Edges touching vertex v, in index order"""
        return [j for j in range(self.m) if self.heads[j] == v or self.tails[j] == v]

    def out_degree(self, v):
        return sum(1 for h in self.heads if h == v)

    def in_degree(self, v):
        return sum(1 for t in self.tails if t == v)

    def to_spec(self):
        spec = {
            "vertices": self.n,
            "edges": [{"head": h, "tail": t} for h, t in self.edges],
        }
        if self.weights is not None:
            spec["weights"] = self.weights.tolist()
        return spec


@dataclass(frozen=True, eq=False)
class IncidenceSet:
    Phi_minus: np.ndarray
    Phi_plus: np.ndarray

    @property
    def Phi(self):
        return self.Phi_minus + self.Phi_plus


@dataclass(frozen=True, eq=False)
class LineGraphMatrices:
    B_w: np.ndarray
    D_w_minus: np.ndarray
    K_minus: np.ndarray

    @property
    def K_plus(self):
        """Incoming Kirchhoff matrix, the transpose of K_minus"""
        return self.K_minus.T.copy()


@dataclass(frozen=True, eq=False)
class StructureReport:
    sinks: Tuple[int, ...]
    sources: Tuple[int, ...]
    strong_components: Tuple[Tuple[int, ...], ...]
    terminal_flags: Tuple[bool, ...]
    cyclic_flags: Tuple[bool, ...]
    directed_cycles: Tuple[Tuple[int, ...], ...]
    edge_class: Tuple[str, ...]
    edge_component: Tuple[int, ...]
    arcs: Tuple[Tuple[int, int], ...] = field(default=())
    is_directed_cycle: bool = False

    @property
    def terminal_components(self):
        return [c for c, flag in zip(self.strong_components, self.terminal_flags) if flag]

    @property
    def acyclic_edges(self):
        return [j for j, cls in enumerate(self.edge_class) if cls == ACYCLIC]

    @property
    def transient_edges(self):
        return [j for j, cls in enumerate(self.edge_class) if cls == TRANSIENT]

    def cycles_in(self, component):
        members = set(component)
        return [c for c in self.directed_cycles if members.issuperset(c)]

    def to_dict(self):
        return {
            "sinks": list(self.sinks),
            "sources": list(self.sources),
            "strong_components": [list(c) for c in self.strong_components],
            "terminal_flags": list(self.terminal_flags),
            "directed_cycles": [list(c) for c in self.directed_cycles],
            "edge_class": list(self.edge_class),
            "edge_component": list(self.edge_component),
            "is_directed_cycle": self.is_directed_cycle,
        }


def build_graph(n, edges, weights=None, default_weights=True):
    """
    Build and validate a metric graph

    Args:
        n: Vertex count
        edges: Sequence of (head, tail) pairs, head = e(1), tail = e(0)
        weights: Optional n x m redistribution weights
        default_weights: Fill w_ij = 1/outdeg(v_i) when weights are omitted

    Returns:
        MetricGraph
    """
    edges = [tuple(int(x) for x in e) for e in edges]
    if n < 2:
        raise ValidationError(f"A metric graph needs at least 2 vertices, got {n}")
    if not edges:
        raise ValidationError("A metric graph needs at least one edge")

    seen = set()
    for j, (head, tail) in enumerate(edges):
        if not (0 <= head < n and 0 <= tail < n):
            raise ValidationError(f"Edge {j} ({head}->{tail}) has an endpoint outside 0..{n - 1}")
        if head == tail:
            raise NotSimpleError(f"Edge {j} is a loop at vertex {head}")
        if (head, tail) in seen:
            raise NotSimpleError(f"Edge {j} duplicates the oriented pair {head}->{tail}")
        seen.add((head, tail))

    undirected = nx.Graph()
    undirected.add_nodes_from(range(n))
    undirected.add_edges_from(edges)
    if not nx.is_connected(undirected):
        parts = nx.number_connected_components(undirected)
        raise DisconnectedError(f"Graph has {parts} connected components")

    heads = tuple(h for h, _ in edges)
    tails = tuple(t for _, t in edges)
    m = len(edges)

    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        _validate_weights(n, heads, weights)
    elif default_weights:
        weights = np.zeros((n, m))
        for v in range(n):
            outgoing = [j for j in range(m) if heads[j] == v]
            for j in outgoing:
                weights[v, j] = 1.0 / len(outgoing)

    return MetricGraph(n=n, heads=heads, tails=tails, weights=weights)


def _validate_weights(n, heads, weights):
    m = len(heads)
    if weights.shape != (n, m):
        raise ShapeMismatchError(f"Weights must be {n}x{m}, got {weights.shape[0]}x{weights.shape[1]}")
    if np.any(weights < 0) or np.any(weights > 1):
        raise BadWeightRowError("Weights must lie in [0, 1]")
    for v in range(n):
        for j in range(m):
            outgoing = heads[j] == v
            if (weights[v, j] != 0) != outgoing:
                raise WeightSupportMismatchError(
                    f"w[{v},{j}] = {weights[v, j]} but edge {j} "
                    f"{'leaves' if outgoing else 'does not leave'} vertex {v}"
                )
        row = weights[v].sum()
        if any(h == v for h in heads) and abs(row - 1.0) > WEIGHT_ROW_TOLERANCE:
            raise BadWeightRowError(f"Weights of vertex {v} sum to {row!r}, expected 1")


def incidence(g):
    """Outgoing (Phi_minus) and incoming (Phi_plus) incidence matrices"""
    Phi_minus = np.zeros((g.n, g.m), dtype=int)
    Phi_plus = np.zeros((g.n, g.m), dtype=int)
    for j, (head, tail) in enumerate(g.edges):
        Phi_minus[head, j] = 1
        Phi_plus[tail, j] = 1
    return IncidenceSet(Phi_minus=Phi_minus, Phi_plus=Phi_plus)


def line_matrices(g):
    """
    Weighted line-graph adjacency, outgoing degree and Kirchhoff matrices

    b_jk = w_ij where v_i = e_k(0) = e_j(1): material leaving edge k enters edge j.
    """
    if g.weights is None:
        raise MissingWeightsError("Line-graph matrices need redistribution weights")
    B_w = np.zeros((g.m, g.m))
    for j in range(g.m):
        for k in range(g.m):
            if g.tails[k] == g.heads[j]:
                B_w[j, k] = g.weights[g.heads[j], j]
    return kirchhoff_from_adjacency(B_w)


def kirchhoff_from_adjacency(B_w):
    """Degree and outgoing Kirchhoff matrix for a given line-graph adjacency"""
    B_w = np.asarray(B_w, dtype=float)
    D_w_minus = np.diag(B_w.sum(axis=0))
    K_minus = D_w_minus - B_w.T
    return LineGraphMatrices(B_w=B_w, D_w_minus=D_w_minus, K_minus=K_minus)


def sinks_and_sources(g):
    inc = incidence(g)
    sinks = tuple(int(v) for v in np.flatnonzero(inc.Phi_minus.sum(axis=1) == 0))
    sources = tuple(int(v) for v in np.flatnonzero(inc.Phi_plus.sum(axis=1) == 0))
    return sinks, sources


def edge_digraph(B_w):
    """Edge digraph with an arc j -> k whenever b_kj != 0"""
    B_w = np.asarray(B_w)
    digraph = nx.DiGraph()
    digraph.add_nodes_from(range(B_w.shape[0]))
    for k, j in zip(*np.nonzero(B_w)):
        digraph.add_edge(int(j), int(k))
    return digraph


def analyze_structure(g, B_w=None, cycle_cap=CYCLE_CAP):
    """
    Strong components, terminal components, elementary cycles and edge classes

    Args:
        g: MetricGraph
        B_w: Optional boundary matrix defining the edge digraph (defaults to line_matrices(g).B_w)
        cycle_cap: Maximum number of elementary cycles to enumerate

    Returns:
        StructureReport
    """
    if B_w is None:
        B_w = line_matrices(g).B_w
    B_w = np.asarray(B_w)
    if B_w.shape != (g.m, g.m):
        raise ShapeMismatchError(f"Boundary matrix must be {g.m}x{g.m}, got {B_w.shape}")

    digraph = edge_digraph(B_w)
    components = sorted(
        (tuple(sorted(c)) for c in nx.strongly_connected_components(digraph)),
        key=lambda c: c[0],
    )
    component_of = {}
    for index, comp in enumerate(components):
        for j in comp:
            component_of[j] = index

    cyclic = []
    terminal = []
    for comp in components:
        members = set(comp)
        has_cycle = len(comp) > 1 or digraph.has_edge(comp[0], comp[0])
        leaves = any(k not in members for j in comp for k in digraph.successors(j))
        cyclic.append(has_cycle)
        terminal.append(has_cycle and not leaves)

    cycles = list(itertools.islice(nx.simple_cycles(digraph), cycle_cap + 1))
    if len(cycles) > cycle_cap:
        raise CycleEnumerationOverflowError(f"More than {cycle_cap} elementary cycles")
    cycles = sorted(_rotate_cycle(c) for c in cycles)

    # Edges reachable from a non-terminal cycle keep decaying mass forever
    stable = set()
    for comp, is_cyclic, is_terminal in zip(components, cyclic, terminal):
        if is_cyclic and not is_terminal:
            stable.update(comp)
            for j in comp:
                stable.update(nx.descendants(digraph, j))

    edge_class = []
    for j in range(g.m):
        index = component_of[j]
        if terminal[index]:
            edge_class.append(TERMINAL)
        elif j in stable:
            edge_class.append(TRANSIENT)
        else:
            edge_class.append(ACYCLIC)

    sinks, sources = sinks_and_sources(g)
    single_cycle = all(g.out_degree(v) == 1 and g.in_degree(v) == 1 for v in range(g.n))

    logger.debug(
        "Structure: %d components, %d terminal, %d cycles",
        len(components), sum(terminal), len(cycles),
    )
    return StructureReport(
        sinks=sinks,
        sources=sources,
        strong_components=tuple(components),
        terminal_flags=tuple(terminal),
        cyclic_flags=tuple(cyclic),
        directed_cycles=tuple(cycles),
        edge_class=tuple(edge_class),
        edge_component=tuple(component_of[j] for j in range(g.m)),
        arcs=tuple(sorted(digraph.edges())),
        is_directed_cycle=single_cycle,
    )


def _rotate_cycle(cycle):
    start = cycle.index(min(cycle))
    return tuple(cycle[start:] + cycle[:start])


def multiplicity_zero_kirchhoff(K_minus, threshold=ZERO_EIGENVALUE_THRESHOLD):
    """
    Algebraic multiplicity of the eigenvalue 0 of a Kirchhoff matrix

    Args:
        K_minus: Square matrix
        threshold: Relative threshold on |lambda| against the matrix norm

    Returns:
        Number of eigenvalues with |lambda| < threshold * ||K_minus||
    """
    K_minus = np.asarray(K_minus, dtype=float)
    if K_minus.ndim != 2 or K_minus.shape[0] != K_minus.shape[1]:
        raise ShapeMismatchError(f"Kirchhoff matrix must be square, got {K_minus.shape}")
    try:
        eigenvalues = np.linalg.eigvals(K_minus)
    except np.linalg.LinAlgError as e:
        raise EigensolverFailureError(f"Eigenvalue computation failed: {e}")
    scale = max(np.linalg.norm(K_minus, 2), 1.0)
    return int(np.sum(np.abs(eigenvalues) < threshold * scale))


def graph_from_spec(spec, default_weights=True):
    """Build a graph from its JSON form {"vertices", "edges", "weights"}"""
    try:
        n = int(spec["vertices"])
        edges: List[Sequence[int]] = [(e["head"], e["tail"]) for e in spec["edges"]]
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Graph spec needs 'vertices' and 'edges' with head/tail: {e}")
    return build_graph(n, edges, spec.get("weights"), default_weights=default_weights)
