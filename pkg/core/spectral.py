"""
Spectral - Perron pairs, periods of terminal components and long-term behaviour of transport
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
import scipy.linalg

from core.errors import (
    EigensolverFailureError,
    LdqFailsError,
    NotIrreducibleError,
    NotNonnegativeError,
    PeriodMismatchError,
    SemisimplicityFailureError,
    ShapeMismatchError,
)
from core.graph_core import analyze_structure, line_matrices
from core.transport import acyclic_path_length, travel_time
from utils.helper import MAX_DENOMINATOR, RATIONAL_TOLERANCE, fraction_gcd, fraction_lcm, rationalize

logger = logging.getLogger(__name__)

PERIPHERAL_TOLERANCE = 1e-8
RESIDUAL_TOLERANCE = 1e-8
RANK_TOLERANCE = 1e-9
UNIT_EIGENVALUE_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class PerronPair:
    """Eigenvalue with right vector e_r (entries sum to 1) and left vector e_l (e_l . e_r = 1)"""
    value: float
    left: np.ndarray
    right: np.ndarray

    @property
    def projection(self):
        return np.outer(self.right, self.left)


@dataclass(frozen=True)
class LdqVerdict:
    holds: bool
    d: Optional[int]
    cycle_sums: Tuple[Optional[Fraction], ...]
    tolerance: float = RATIONAL_TOLERANCE
    max_denominator: int = MAX_DENOMINATOR

    def to_dict(self):
        return {
            "holds": self.holds,
            "d": self.d,
            "cycle_sums": [None if s is None else str(s) for s in self.cycle_sums],
            "tolerance": self.tolerance,
            "max_denominator": self.max_denominator,
        }


@dataclass(frozen=True, eq=False)
class ComponentBehaviour:
    edges: Tuple[int, ...]
    ldq_holds: bool
    d: Optional[int]
    period: Optional[Fraction]
    imprimitivity: int

    @property
    def behaviour(self):
        return "periodic" if self.ldq_holds else "convergent"

    def to_dict(self):
        return {
            "edges": list(self.edges),
            "behaviour": self.behaviour,
            "ldq_holds": self.ldq_holds,
            "d": self.d,
            "period": None if self.period is None else float(self.period),
            "period_exact": None if self.period is None else str(self.period),
            "imprimitivity": self.imprimitivity,
        }


@dataclass(frozen=True, eq=False)
class AsymptoticsReport:
    edge_class: Tuple[str, ...]
    acyclic_edges: Tuple[int, ...]
    transient_components: Tuple[Tuple[int, ...], ...]
    terminal: Tuple[ComponentBehaviour, ...]
    mutation_period: Optional[Fraction]
    extinction_time: float
    unit_multiplicity: int
    lengths: Tuple[float, ...] = field(default=())

    def to_dict(self):
        return {
            "edge_class": list(self.edge_class),
            "acyclic_edges": list(self.acyclic_edges),
            "transient_components": [list(c) for c in self.transient_components],
            "terminal_components": [c.to_dict() for c in self.terminal],
            "mutation_period": None if self.mutation_period is None else float(self.mutation_period),
            "mutation_period_exact": None if self.mutation_period is None else str(self.mutation_period),
            "extinction_time": self.extinction_time,
            "unit_multiplicity": self.unit_multiplicity,
            "lengths": list(self.lengths),
        }


def _square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeMismatchError(f"Expected a square matrix, got shape {M.shape}")
    return M


def _support_digraph(M):
    digraph = nx.DiGraph()
    digraph.add_nodes_from(range(M.shape[0]))
    for i, j in zip(*np.nonzero(M)):
        digraph.add_edge(int(j), int(i))
    return digraph


def is_irreducible(M):
    return nx.is_strongly_connected(_support_digraph(_square(M)))


def perron_pair(M, target=None):
    """
    Left and right eigenvectors of a nonnegative matrix

    Args:
        M: Square nonnegative matrix
        target: Eigenvalue to pick (defaults to the spectral radius)

    Returns:
        PerronPair normalized so that sum(e_r) = 1 and e_l . e_r = 1
    """
    M = _square(M)
    if np.any(M < 0):
        raise NotNonnegativeError("Perron pair needs an entrywise nonnegative matrix")
    if not is_irreducible(M):
        logger.warning("Matrix is reducible: the Perron pair may not be unique")

    try:
        values, vl, vr = scipy.linalg.eig(M, left=True, right=True)
    except scipy.linalg.LinAlgError as e:
        raise EigensolverFailureError(f"Eigensolve failed: {e}")

    if target is None:
        radius = np.max(np.abs(values))
        candidates = np.flatnonzero(np.abs(np.abs(values) - radius) <= PERIPHERAL_TOLERANCE * max(1.0, radius))
        index = candidates[np.argmax(values[candidates].real)]
    else:
        index = int(np.argmin(np.abs(values - target)))

    value = float(values[index].real)
    right = vr[:, index].real
    left = vl[:, index].real
    if abs(right.sum()) < np.finfo(float).eps:
        raise EigensolverFailureError(f"Right eigenvector for {value} cannot be normalized")
    right = right / right.sum()
    pairing = float(left @ right)
    if abs(pairing) < np.finfo(float).eps:
        raise EigensolverFailureError(f"Eigenvalue {value} has orthogonal left and right vectors")
    left = left / pairing

    scale = max(1.0, np.linalg.norm(M, 1))
    if (np.linalg.norm(M @ right - value * right, np.inf) > RESIDUAL_TOLERANCE * scale
            or np.linalg.norm(left @ M - value * left, np.inf) > RESIDUAL_TOLERANCE * scale * np.abs(left).max()):
        raise EigensolverFailureError(f"Eigenpair residual too large for eigenvalue {value}")
    return PerronPair(value=value, left=left, right=right)


def _rank(M):
    return int(np.linalg.matrix_rank(M, tol=RANK_TOLERANCE * max(1.0, np.linalg.norm(M, 2))))


def spectral_projection(M, value=1.0):
    """
    Projection onto ker(M - value) along ran(M - value)

    Args:
        M: Square matrix
        value: Semisimple eigenvalue of M

    Returns:
        Projection matrix (zero when value is not an eigenvalue)
    """
    M = _square(M)
    shifted = M - value * np.eye(M.shape[0])
    if _rank(shifted @ shifted) != _rank(shifted):
        raise SemisimplicityFailureError(f"Eigenvalue {value} is not semisimple")
    right = scipy.linalg.null_space(shifted, rcond=RANK_TOLERANCE)
    left = scipy.linalg.null_space(shifted.T, rcond=RANK_TOLERANCE).T
    if right.shape[1] == 0:
        return np.zeros_like(M)
    return right @ np.linalg.solve(left @ right, left)


def check_ldq(report, lengths):
    """
    Commensurability of the travel times of all directed cycles

    Args:
        report: StructureReport with enumerated cycles
        lengths: Travel time per edge

    Returns:
        LdqVerdict with d = lcm of the denominators of the reconstructed cycle sums
    """
    sums = []
    for cycle in report.directed_cycles:
        total = float(sum(lengths[j] for j in cycle))
        sums.append(rationalize(total))
    holds = all(s is not None for s in sums)
    d = None
    if holds:
        d = math.lcm(1, *(s.denominator for s in sums))
    return LdqVerdict(holds=holds, d=d, cycle_sums=tuple(sums))


def _period_from_cycles(report, component, lengths):
    sums = []
    for cycle in report.cycles_in(component):
        exact = rationalize(float(sum(lengths[j] for j in cycle)))
        if exact is None:
            raise LdqFailsError(f"Cycle {list(cycle)} has no rational travel time")
        sums.append(exact)
    return fraction_gcd(sums)


def _period_from_potentials(report, component, lengths):
    """gcd of the discrepancies of a BFS potential over the component's arcs"""
    members = set(component)
    successors: Dict[int, List[int]] = {j: [] for j in component}
    arcs = [(j, k) for j, k in report.arcs if j in members and k in members]
    for j, k in arcs:
        successors[j].append(k)

    root = min(component)
    potential = {root: 0.0}
    queue = deque([root])
    while queue:
        j = queue.popleft()
        for k in successors[j]:
            if k not in potential:
                potential[k] = potential[j] + lengths[j]
                queue.append(k)

    discrepancies = []
    for j, k in arcs:
        exact = rationalize(potential[j] + lengths[j] - potential[k])
        if exact is None:
            raise LdqFailsError(f"Arc {j}->{k} closes a cycle with irrational travel time")
        discrepancies.append(abs(exact))
    return fraction_gcd(discrepancies)


def component_period(report, component, lengths):
    """
    Period tau_i of a terminal component

    Computed from the enumerated cycles and from edge potentials; the two must agree.

    Args:
        report: StructureReport
        component: Edge indices of a strongly connected component
        lengths: Travel time per edge

    Returns:
        Fraction tau_i
    """
    by_cycles = _period_from_cycles(report, component, lengths)
    by_potentials = _period_from_potentials(report, component, lengths)
    if by_cycles != by_potentials:
        raise PeriodMismatchError(
            f"Component {list(component)}: cycle gcd {by_cycles} differs from potential gcd {by_potentials}"
        )
    if by_cycles == 0:
        raise LdqFailsError(f"Component {list(component)} contains no cycle")
    return by_cycles


def imprimitivity_index(M):
    """
    Number of eigenvalues on the spectral circle of an irreducible nonnegative matrix

    Args:
        M: Square nonnegative matrix

    Returns:
        h >= 1; h = 1 means primitive
    """
    M = _square(M)
    if np.any(M < 0):
        raise NotNonnegativeError("Imprimitivity index needs a nonnegative matrix")
    if not is_irreducible(M):
        raise NotIrreducibleError("Imprimitivity index needs an irreducible matrix")
    try:
        values = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as e:
        raise EigensolverFailureError(f"Eigenvalue computation failed: {e}")
    radius = float(np.max(np.abs(values)))
    return int(np.sum(np.abs(np.abs(values) - radius) <= PERIPHERAL_TOLERANCE * max(1.0, radius)))


def classify_long_term(g, c, B_w=None):
    """
    Long-term classification of the transport semigroup

    Args:
        g: MetricGraph
        c: CoefficientField of velocities
        B_w: Optional boundary matrix (defaults to the graph's line adjacency)

    Returns:
        AsymptoticsReport
    """
    if B_w is None:
        B_w = line_matrices(g).B_w
    B_w = np.asarray(B_w, dtype=float)
    report = analyze_structure(g, B_w)
    lengths = travel_time(c).lengths

    terminal = []
    for component in report.terminal_components:
        restricted = B_w[np.ix_(component, component)]
        index = imprimitivity_index(restricted)
        verdict = check_ldq(_restrict(report, component), lengths)
        period = component_period(report, component, lengths) if verdict.holds else None
        terminal.append(ComponentBehaviour(
            edges=tuple(component),
            ldq_holds=verdict.holds,
            d=verdict.d,
            period=period,
            imprimitivity=index,
        ))

    periods = [t.period for t in terminal]
    mutation_period = fraction_lcm(periods) if periods and all(p is not None for p in periods) else None

    transient = tuple(
        comp for comp, cyclic, term in zip(report.strong_components, report.cyclic_flags, report.terminal_flags)
        if cyclic and not term
    )
    exact = [rationalize(length) for length in lengths]
    path_lengths = exact if all(e is not None for e in exact) else list(lengths)
    extinction = float(acyclic_path_length(report, path_lengths))

    values = np.linalg.eigvals(B_w)
    unit = int(np.sum(np.abs(values - 1.0) <= UNIT_EIGENVALUE_TOLERANCE))

    logger.info(
        "Long-term: %d terminal components, %d acyclic edges, period %s",
        len(terminal), len(report.acyclic_edges), mutation_period,
    )
    return AsymptoticsReport(
        edge_class=report.edge_class,
        acyclic_edges=tuple(report.acyclic_edges),
        transient_components=transient,
        terminal=tuple(terminal),
        mutation_period=mutation_period,
        extinction_time=extinction,
        unit_multiplicity=unit,
        lengths=tuple(float(x) for x in lengths),
    )


def _restrict(report, component):
    """Report view holding only the cycles inside component"""
    return replace(report, directed_cycles=tuple(report.cycles_in(component)))
