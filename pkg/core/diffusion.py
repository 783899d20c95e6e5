"""
Diffusion - implicit finite differences for the heat equation on a metric graph
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import splu

from core.errors import (
    EigensolverFailureError,
    KernelDimensionNotOneError,
    LinearSolveFailureError,
    ShapeMismatchError,
    SingularBoundaryRowsError,
    ValidationError,
)
from core.generation import check_diffusion_generation

logger = logging.getLogger(__name__)

MIN_CELLS = 4
KERNEL_RCOND = 1e-10
ZERO_EIGENVALUE_THRESHOLD = 1e-8
SCHEMES = ("be", "tr")


@dataclass(frozen=True, eq=False)
class DiscreteGenerator:
    """
    Sparse generator A_h of du/dt = a u'' with vertex conditions

    Standard layout: N interior nodes per edge, then one shared unknown per vertex.
    Robin layout: N + 2 nodes per edge including both endpoints.
    """
    A: sp.csr_matrix
    N: int
    ds: float
    mode: str
    m: int
    n: int
    coefficients: object
    boundary: object
    graph: Optional[object] = None

    @property
    def size(self):
        return self.A.shape[0]

    @property
    def nodes_per_edge(self):
        return self.N if self.mode == "standard" else self.N + 2

    def positions(self):
        """Node positions of a full edge, endpoints included"""
        return np.linspace(0.0, 1.0, self.N + 2)

    def edge_values(self, x, j):
        """Values along edge j from s = 0 to s = 1, endpoints included"""
        if self.mode == "robin":
            start = j * (self.N + 2)
            return x[start:start + self.N + 2]
        start = j * self.N
        offset = self.m * self.N
        tail = x[offset + self.graph.tails[j]]
        head = x[offset + self.graph.heads[j]]
        return np.concatenate([[tail], x[start:start + self.N], [head]])

    def traces(self, x):
        """Endpoint values (f(0), f(1)) per edge"""
        f0 = np.array([self.edge_values(x, j)[0] for j in range(self.m)])
        f1 = np.array([self.edge_values(x, j)[-1] for j in range(self.m)])
        return f0, f1

    def derivatives(self, x):
        """Second-order one-sided endpoint derivatives (f'(0), f'(1)) per edge"""
        df0 = np.empty(self.m)
        df1 = np.empty(self.m)
        for j in range(self.m):
            u = self.edge_values(x, j)
            df0[j] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * self.ds)
            df1[j] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * self.ds)
        return df0, df1

    def edge_masses(self, x):
        """Trapezoid integral of u over each edge"""
        s = self.positions()
        return np.array([trapezoid(self.edge_values(x, j), s) for j in range(self.m)])


@dataclass(frozen=True, eq=False)
class DiffusionState:
    values: np.ndarray
    t: float = 0.0
    scheme: str = "be"
    dt: float = 1e-3


@dataclass(frozen=True, eq=False)
class DiffusionResiduals:
    continuity_res: float
    flux_res: float
    mass: float

    def to_dict(self):
        return {"continuity_res": self.continuity_res, "flux_res": self.flux_res, "mass": self.mass}


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """Projection onto ker A_h along ran A_h and the slowest decay rate"""
    projection: np.ndarray
    rate: float
    right: np.ndarray
    left: np.ndarray

    def apply(self, x):
        return self.projection @ x


def _interior_rows(rows, cols, vals, a_interior, first, ds, left, right):
    """Central differences on one edge; left/right are the neighbour indices of the end nodes"""
    N = a_interior.size
    scale = a_interior / ds**2
    for i in range(N):
        row = first + i
        rows.append(row)
        cols.append(row)
        vals.append(-2.0 * scale[i])
        rows.append(row)
        cols.append(left if i == 0 else row - 1)
        vals.append(scale[i])
        rows.append(row)
        cols.append(right if i == N - 1 else row + 1)
        vals.append(scale[i])


def assemble(g, a, boundary, N):
    """
    Assemble the discrete generator

    Args:
        g: MetricGraph (may be None for Robin conditions on an abstract bundle)
        a: CoefficientField of diffusivities
        boundary: DiffusionBoundary from the generation module
        N: Interior nodes per edge

    Returns:
        DiscreteGenerator
    """
    if N < MIN_CELLS:
        raise ValidationError(f"Diffusion needs at least {MIN_CELLS} interior nodes, got {N}")
    m = boundary.m
    if a.m != m:
        raise ShapeMismatchError(f"Diffusivities cover {a.m} edges, conditions {m}")
    verdict = check_diffusion_generation(boundary, a)
    if not verdict.ok:
        raise SingularBoundaryRowsError(
            f"Vertex conditions are degenerate (det {verdict.determinant:.3g}, bound {verdict.hadamard_bound:.3g})"
        )

    ds = 1.0 / (N + 1)
    s_interior = np.arange(1, N + 1) * ds
    rows, cols, vals = [], [], []

    if boundary.mode == "robin":
        if g is not None and g.m != m:
            raise ShapeMismatchError(f"Graph has {g.m} edges, conditions {m}")
        K = boundary.robin_K
        stride = N + 2
        n = g.n if g is not None else 0
        a0 = a.at_zero()
        a1 = a.at_one()
        for j in range(m):
            start = j * stride
            _interior_rows(rows, cols, vals, a.evaluate(j, s_interior), start + 1, ds,
                           start, start + N + 1)
            # u0' = (2/ds) a(0) [(u1 - u0)/ds - f'(0)], f'(0) = (K tr)_j
            low = start
            high = start + N + 1
            factor0 = 2.0 * a0[j] / ds
            factor1 = 2.0 * a1[j] / ds
            rows += [low, low]
            cols += [low, low + 1]
            vals += [-factor0 / ds, factor0 / ds]
            rows += [high, high]
            cols += [high, high - 1]
            vals += [-factor1 / ds, factor1 / ds]
            for k in range(m):
                for q, node in ((0, k * stride), (1, k * stride + N + 1)):
                    top = K[j, q * m + k]
                    bottom = K[m + j, q * m + k]
                    if top:
                        rows.append(low)
                        cols.append(node)
                        vals.append(-factor0 * top)
                    if bottom:
                        rows.append(high)
                        cols.append(node)
                        vals.append(factor1 * bottom)
        size = m * stride
    else:
        if g is None:
            raise ValidationError("Standard diffusion conditions need a graph")
        n = g.n
        offset = m * N
        for j in range(m):
            _interior_rows(rows, cols, vals, a.evaluate(j, s_interior), j * N, ds,
                           offset + g.tails[j], offset + g.heads[j])
        # half-cell balance: sum_j (ds/2) u_v' = sum_j a_j(v) (u_nbr - u_v) / ds
        for v in range(n):
            star = g.incident_edges(v)
            weight = len(star) * ds / 2.0
            row = offset + v
            for j in star:
                at_tail = g.tails[j] == v
                coeff = float(a.evaluate(j, 0.0 if at_tail else 1.0)) / ds / weight
                neighbour = j * N if at_tail else j * N + N - 1
                rows += [row, row]
                cols += [neighbour, row]
                vals += [coeff, -coeff]
        size = offset + n

    A = sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(size, size)))
    logger.debug("Assembled %s generator: %d unknowns, %d nonzeros", boundary.mode, size, A.nnz)
    return DiscreteGenerator(A=A, N=N, ds=ds, mode=boundary.mode, m=m, n=n,
                             coefficients=a, boundary=boundary, graph=g)


def initial_state(gen, f, scheme="be", dt=1e-3):
    """
    Sample initial data on the grid

    Args:
        gen: DiscreteGenerator
        f: Callable f(j, s), a constant, or per-edge samples on [0, 1]
        scheme: "be" or "tr"
        dt: Time step

    Returns:
        DiffusionState at t = 0; shared vertex unknowns take the mean of the incident endpoint values
    """
    s = gen.positions()
    profiles = []
    for j in range(gen.m):
        if callable(f):
            values = np.asarray(f(j, s), dtype=float) * np.ones_like(s)
        elif np.isscalar(f):
            values = np.full_like(s, float(f))
        else:
            edge = np.asarray(f[j], dtype=float)
            values = np.full_like(s, float(edge)) if edge.ndim == 0 else np.interp(
                s, np.linspace(0.0, 1.0, edge.size), edge)
        profiles.append(values)

    if gen.mode == "robin":
        x = np.concatenate(profiles)
    else:
        g = gen.graph
        vertex_values = np.zeros(gen.n)
        for v in range(gen.n):
            star = g.incident_edges(v)
            vertex_values[v] = np.mean([profiles[j][0] if g.tails[j] == v else profiles[j][-1] for j in star])
        x = np.concatenate([p[1:-1] for p in profiles] + [vertex_values])

    if not np.all(np.isfinite(x)):
        raise ValidationError("Initial diffusion data is not finite")
    if scheme not in SCHEMES:
        raise ValidationError(f"Unknown scheme {scheme!r}, expected one of {SCHEMES}")
    return DiffusionState(values=x, t=0.0, scheme=scheme, dt=float(dt))


class StepSolver:
    """Factorized one-step map of backward Euler or the trapezoidal rule"""

    def __init__(self, gen, dt, scheme="be"):
        if dt <= 0:
            raise ValidationError(f"Time step must be positive, got {dt}")
        if scheme not in SCHEMES:
            raise ValidationError(f"Unknown scheme {scheme!r}, expected one of {SCHEMES}")
        self.dt = dt
        self.scheme = scheme
        identity = sp.identity(gen.size, format="csc")
        theta = 1.0 if scheme == "be" else 0.5
        lhs = (identity - theta * dt * gen.A).tocsc()
        self._explicit = None if scheme == "be" else (identity + (1.0 - theta) * dt * gen.A).tocsr()
        # Natural order with diagonal pivots keeps the factors of an M-matrix sign-definite
        try:
            self._lu = splu(lhs, permc_spec="NATURAL", diag_pivot_thresh=0.0)
        except RuntimeError as e:
            raise LinearSolveFailureError(f"Factorization failed for dt = {dt}: {e}")

    def step(self, x):
        rhs = x if self._explicit is None else self._explicit @ x
        y = self._lu.solve(rhs)
        if not np.all(np.isfinite(y)):
            raise LinearSolveFailureError("Linear solve produced non-finite values")
        return y


def evolve_diffusion(gen, state, T, dt=None, scheme=None, observer=None):
    """
    Advance a diffusion state by T

    Args:
        gen: DiscreteGenerator
        state: DiffusionState
        T: Duration (>= 0)
        dt: Time step (defaults to the state's); shrunk so that T is a whole number of steps
        scheme: "be" (default) or "tr"
        observer: Optional callable receiving the state after each step

    Returns:
        DiffusionState at t + T
    """
    dt = state.dt if dt is None else float(dt)
    scheme = state.scheme if scheme is None else scheme
    if state.values.size != gen.size:
        raise ShapeMismatchError(f"State has {state.values.size} unknowns, generator {gen.size}")
    if T < 0:
        raise ValidationError(f"Duration must be nonnegative, got {T}")
    if T == 0:
        return replace(state, dt=dt, scheme=scheme)

    steps = max(1, math.ceil(T / dt - 1e-9))
    dt_eff = T / steps
    if abs(dt_eff - dt) > 1e-12 * dt:
        logger.warning("Time step adjusted from %g to %g so that T = %g is reached exactly", dt, dt_eff, T)

    solver = StepSolver(gen, dt_eff, scheme)
    x = state.values
    t0 = state.t
    for k in range(1, steps + 1):
        x = solver.step(x)
        if observer is not None:
            observer(DiffusionState(values=x, t=t0 + k * dt_eff, scheme=scheme, dt=dt_eff))
    return DiffusionState(values=x, t=t0 + T, scheme=scheme, dt=dt_eff)


def residuals(gen, state):
    """Continuity defect, Kirchhoff flux defect and trapezoid mass of a state"""
    x = state.values
    f0, f1 = gen.traces(x)
    df0, df1 = gen.derivatives(x)

    continuity = 0.0
    if gen.mode == "robin" and gen.graph is not None:
        g = gen.graph
        for v in range(g.n):
            values = [f0[j] if g.tails[j] == v else f1[j] for j in g.incident_edges(v)]
            if values:
                continuity = max(continuity, float(np.max(values) - np.min(values)))

    flux = gen.boundary.flux_residual(f0, f1, df0, df1)
    mass = float(gen.edge_masses(x).sum())
    return DiffusionResiduals(continuity_res=continuity, flux_res=flux, mass=mass)


def equilibrium(gen):
    """
    Spectral projection onto the kernel of A_h and the decay rate

    Returns:
        Equilibrium with Pi = r l^T / (l . r) and rate = largest real part of the nonzero eigenvalues
    """
    A = gen.A.toarray()
    try:
        eigenvalues = scipy.linalg.eigvals(A)
        right = scipy.linalg.null_space(A, rcond=KERNEL_RCOND)
        left = scipy.linalg.null_space(A.T, rcond=KERNEL_RCOND)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise EigensolverFailureError(f"Dense eigensolve failed: {e}")

    if right.shape[1] != 1 or left.shape[1] != 1:
        raise KernelDimensionNotOneError(
            f"Kernel dimensions {right.shape[1]} (right) and {left.shape[1]} (left), expected 1"
        )
    r = right[:, 0]
    l = left[:, 0]
    if r.sum() < 0:
        r = -r
    pairing = float(l @ r)
    projection = np.outer(r, l) / pairing

    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    nonzero = eigenvalues[np.abs(eigenvalues) > ZERO_EIGENVALUE_THRESHOLD * scale]
    rate = float(np.max(nonzero.real)) if nonzero.size else 0.0
    return Equilibrium(projection=projection, rate=rate, right=r, left=l / pairing)


def state_rows(gen, state):
    """CSV rows (t, edge, s, u)"""
    s = gen.positions()
    rows = []
    for j in range(gen.m):
        u = gen.edge_values(state.values, j)
        for i in range(s.size):
            rows.append((state.t, j, float(s[i]), float(u[i])))
    return rows
