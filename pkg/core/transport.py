"""
Transport - exact characteristic solver in travel-time coordinates
"""

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Tuple

import networkx as nx
import numpy as np
from scipy.integrate import cumulative_trapezoid

from core.coefficients import CoefficientField
from core.errors import IncommensurableLengthsError, NonGridTimeError, ShapeMismatchError, ValidationError
from core.generation import TransportBoundary
from core.graph_core import incidence
from utils.helper import fraction_gcd, rationalize

logger = logging.getLogger(__name__)

GRID_TIME_TOLERANCE = 1e-9
MAX_TOTAL_CELLS = 2_000_000


@dataclass(frozen=True, eq=False)
class TravelTimeMap:
    """phi_j(s) = integral of 1/c_j over [0, s]; lengths[j] = phi_j(1)"""
    lengths: np.ndarray
    velocities: CoefficientField
    tables: Tuple[Optional[Tuple[np.ndarray, np.ndarray]], ...]

    def phi(self, j, s):
        s = np.asarray(s, dtype=float)
        table = self.tables[j]
        if table is None:
            return s / self.velocities.edges[j]
        grid, values = table
        return np.interp(s, grid, values)

    def inverse(self, j, y):
        """Position s with phi_j(s) = y, clipped to [0, 1]"""
        y = np.asarray(y, dtype=float)
        table = self.tables[j]
        if table is None:
            return np.clip(y * self.velocities.edges[j], 0.0, 1.0)
        grid, values = table
        return np.interp(y, values, grid)


@dataclass(frozen=True, eq=False)
class TransportDiagnostics:
    mass: float
    kirchhoff_residual: float
    min_value: float

    def to_dict(self):
        return {
            "mass": self.mass,
            "kirchhoff_residual": self.kirchhoff_residual,
            "min_value": self.min_value,
        }


@dataclass(frozen=True, eq=False)
class GraphState:
    """
    Cell values u_j on a uniform travel-time grid. Cell 0 sits at y = 0 (s = 0, the
    outflow end); the last cell at y = l_j receives the inflow.
    """
    samples: Tuple[np.ndarray, ...]
    h: float
    h_exact: Optional[Fraction]
    steps: int
    boundary: np.ndarray
    velocities: CoefficientField
    travel: TravelTimeMap
    positions: Tuple[np.ndarray, ...]
    widths: Tuple[np.ndarray, ...]
    trace_out: np.ndarray
    trace_in: np.ndarray
    snap_error: float = 0.0
    graph: Optional[object] = None

    @property
    def m(self):
        return len(self.samples)

    @property
    def cells(self):
        return tuple(s.size for s in self.samples)

    @property
    def t(self):
        if self.h_exact is not None:
            return float(self.steps * self.h_exact)
        return self.steps * self.h

    def grid_length(self, j):
        """Travel time of edge j on the grid (exact when h_exact is known)"""
        if self.h_exact is not None:
            return self.cells[j] * self.h_exact
        return self.cells[j] * self.h


def travel_time(c):
    """
    Travel-time maps of a velocity field

    Args:
        c: CoefficientField of velocities

    Returns:
        TravelTimeMap with closed forms for constants and cumulative trapezoid tables otherwise
    """
    lengths = []
    tables = []
    for j, value in enumerate(c.edges):
        if isinstance(value, np.ndarray):
            grid = np.linspace(0.0, 1.0, value.size)
            values = cumulative_trapezoid(1.0 / value, grid, initial=0.0)
            lengths.append(float(values[-1]))
            tables.append((grid, values))
        else:
            lengths.append(1.0 / value)
            tables.append(None)
    return TravelTimeMap(lengths=np.array(lengths), velocities=c, tables=tuple(tables))


def choose_grid(lengths, h_target, strict=False):
    """
    Common time step for all edges

    Commensurable lengths get the largest h <= h_target dividing their rational gcd;
    otherwise every length is snapped to a multiple of h_target.

    Returns:
        (h, h_exact or None, cells, snap_error)
    """
    if h_target <= 0:
        raise ValidationError(f"Grid step must be positive, got {h_target}")
    exact = [rationalize(length) for length in lengths]
    target = rationalize(h_target) or Fraction(h_target)

    if all(e is not None and e > 0 for e in exact):
        common = fraction_gcd(exact)
        k = math.ceil(common / target)
        h_exact = common / k
        cells = tuple(int(e / h_exact) for e in exact)
        if sum(cells) <= MAX_TOTAL_CELLS:
            # rational reconstruction may move a float length by up to its tolerance
            snap_error = max(float(abs(Fraction(length) - n * h_exact)) for n, length in zip(cells, lengths))
            return float(h_exact), h_exact, cells, snap_error
        logger.warning("Common grid for lengths %s needs %d cells; snapping instead", list(lengths), sum(cells))

    if strict:
        raise IncommensurableLengthsError(f"Edge travel times {list(lengths)} have no common grid")
    h = float(h_target)
    cells = tuple(max(1, int(round(length / h))) for length in lengths)
    snap_error = max(abs(n * h - length) for n, length in zip(cells, lengths))
    logger.warning("Travel times snapped to multiples of h = %g (max snap error %.3g)", h, snap_error)
    return h, None, cells, snap_error


def _sample(f, j, s):
    if callable(f):
        return np.asarray(f(j, s), dtype=float) * np.ones_like(s)
    if np.isscalar(f):
        return np.full_like(s, float(f))
    values = np.asarray(f[j], dtype=float)
    if np.ndim(values) == 0:
        return np.full_like(s, float(values))
    grid = np.linspace(0.0, 1.0, values.size)
    return np.interp(s, grid, values)


def init_state(g, boundary, c, f, h_target, strict=False):
    """
    Initial grid state

    Args:
        g: MetricGraph, or None for an abstract bundle of edges
        boundary: TransportBoundary or an m x m matrix B_c
        c: CoefficientField of velocities
        f: Initial data: callable f(j, s), a constant, or per-edge samples on [0, 1]
        h_target: Upper bound for the time step
        strict: Raise on incommensurable travel times instead of snapping

    Returns:
        GraphState at t = 0
    """
    B_c = boundary.B_c if isinstance(boundary, TransportBoundary) else np.asarray(boundary, dtype=float)
    m = c.m
    if B_c.shape != (m, m):
        raise ShapeMismatchError(f"Boundary matrix must be {m}x{m}, got {B_c.shape}")
    if g is not None and g.m != m:
        raise ShapeMismatchError(f"Graph has {g.m} edges, coefficients {m}")

    travel = travel_time(c)
    h, h_exact, cells, snap_error = choose_grid(travel.lengths, h_target, strict)

    samples = []
    positions = []
    widths = []
    for j in range(m):
        y = (np.arange(cells[j]) + 0.5) * h
        s = travel.inverse(j, y)
        values = _sample(f, j, s)
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"Initial data on edge {j} is not finite")
        samples.append(values)
        positions.append(s)
        widths.append(c.evaluate(j, s) * h)

    trace_out = np.array([u[0] for u in samples])
    logger.debug("Transport grid: h = %g, cells = %s", h, cells)
    return GraphState(
        samples=tuple(samples),
        h=h,
        h_exact=h_exact,
        steps=0,
        boundary=B_c,
        velocities=c,
        travel=travel,
        positions=tuple(positions),
        widths=tuple(widths),
        trace_out=trace_out,
        trace_in=B_c @ trace_out,
        snap_error=snap_error,
        graph=g,
    )


def grid_steps(state, T):
    """Number of steps k with T = k h"""
    if T < 0:
        raise NonGridTimeError(f"Duration must be nonnegative, got {T}")
    k = int(round(T / state.h))
    if abs(k * state.h - T) > GRID_TIME_TOLERANCE * max(1.0, abs(T)):
        raise NonGridTimeError(f"T = {T} is not a multiple of the step h = {state.h}")
    return k


def evolve(state, T):
    """
    Advance by T = k h with exact unit shifts

    Steps are taken in blocks of at most min_j N_j: every sample that exits
    during a block is already on its edge when the block starts.
    """
    remaining = grid_steps(state, T)
    if remaining == 0:
        return state

    samples = list(state.samples)
    shortest = min(state.cells)
    trace_out = state.trace_out
    trace_in = state.trace_in
    while remaining > 0:
        block = min(remaining, shortest)
        exits = np.stack([u[:block] for u in samples])
        inflow = state.boundary @ exits
        samples = [np.concatenate([u[block:], inflow[j]]) for j, u in enumerate(samples)]
        trace_out = exits[:, -1].copy()
        trace_in = inflow[:, -1].copy()
        remaining -= block

    return replace(
        state,
        samples=tuple(samples),
        steps=state.steps + grid_steps(state, T),
        trace_out=trace_out,
        trace_in=trace_in,
    )


def trajectory(state, T, every=1):
    """States at t0, t0 + every*h, ... up to t0 + T"""
    total = grid_steps(state, T)
    states = [state]
    done = 0
    while done < total:
        chunk = min(every, total - done)
        state = evolve(state, chunk * state.h)
        states.append(state)
        done += chunk
    return states


def edge_masses(state):
    """Integral of u_j over each edge, in the original coordinate"""
    return np.array([float(np.dot(u, w)) for u, w in zip(state.samples, state.widths)])


def diagnostics(state):
    """Mass, Kirchhoff residual and minimum of a state"""
    mass = float(edge_masses(state).sum())
    c0 = state.velocities.at_zero()
    c1 = state.velocities.at_one()
    if state.graph is not None:
        inc = incidence(state.graph)
        residual = inc.Phi_minus @ (c1 * state.trace_in) - inc.Phi_plus @ (c0 * state.trace_out)
    else:
        B_w = (state.boundary * c1[:, None]) / c0[None, :]
        residual = c1 * state.trace_in - B_w @ (c0 * state.trace_out)
    min_value = min(float(u.min()) for u in state.samples)
    return TransportDiagnostics(
        mass=mass,
        kirchhoff_residual=float(np.max(np.abs(residual))),
        min_value=min_value,
    )


def acyclic_path_length(report, lengths):
    """
    Longest travel time along a chain of acyclic edges

    Args:
        report: StructureReport
        lengths: Travel time per edge (floats or Fractions)

    Returns:
        Longest path length, 0 without acyclic edges
    """
    acyclic = report.acyclic_edges
    if not acyclic:
        return 0
    digraph = nx.DiGraph()
    digraph.add_nodes_from(acyclic)
    members = set(acyclic)
    digraph.add_edges_from((j, k) for j, k in report.arcs if j in members and k in members)

    longest = {}
    for j in nx.topological_sort(digraph):
        upstream = [longest[p] for p in digraph.predecessors(j)]
        longest[j] = lengths[j] + (max(upstream) if upstream else 0)
    return max(longest.values())


def nilpotent_extinction(report, state):
    """Time t* after which every acyclic edge of the grid state is empty"""
    return float(acyclic_path_length(report, [state.grid_length(j) for j in range(state.m)]))


def extinct(state, edges):
    """True when every sample on the given edges is exactly zero"""
    return all(not np.any(state.samples[j]) for j in edges)


def state_rows(state):
    """CSV rows (t, edge, cell_index, s, u)"""
    t = state.t
    rows = []
    for j, (u, s) in enumerate(zip(state.samples, state.positions)):
        for i in range(u.size):
            rows.append((t, j, i, float(s[i]), float(u[i])))
    return rows
