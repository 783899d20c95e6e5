"""
Generation - vertex-condition matrices and well-posedness checks
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from core.errors import HasSinkOrSourceError, ShapeMismatchError
from core.graph_core import incidence, line_matrices, sinks_and_sources

logger = logging.getLogger(__name__)

DETERMINANT_THRESHOLD = 1e-10


@dataclass(frozen=True, eq=False)
class TransportBoundary:
    B_c: np.ndarray
    is_semigroup: bool
    is_group: bool
    determinant: float

    def to_dict(self):
        return {"semigroup": self.is_semigroup, "group": self.is_group}


@dataclass(frozen=True, eq=False)
class GenerationVerdict:
    determinant: float
    hadamard_bound: float
    ok: bool

    def to_dict(self):
        return {"det": self.determinant, "ok": self.ok}


@dataclass(frozen=True, eq=False)
class DiffusionBoundary:
    """
    Vertex conditions V0 f(0) + V1 f(1) = 0 and W0 f'(0) - W1 f'(1) + K (f(0), f(1)) = 0.

    mode is "standard" (continuity + Kirchhoff) or "robin" (Fick-type exchange
    f' = K traces, no continuity rows).
    """
    V0: np.ndarray
    V1: np.ndarray
    W0: np.ndarray
    W1: np.ndarray
    det_value: float
    mode: str = "standard"
    robin_K: Optional[np.ndarray] = None

    @property
    def m(self):
        return self.V0.shape[1]

    def continuity_residual(self, f0, f1):
        if self.V0.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.V0 @ f0 + self.V1 @ f1)))

    def flux_residual(self, f0, f1, df0, df1):
        """Max defect of the flux rows on given endpoint values and derivatives"""
        rows = self.W0 @ df0 - self.W1 @ df1
        if self.robin_K is not None:
            rows = rows + self.robin_K @ np.concatenate([f0, f1])
        return float(np.max(np.abs(rows))) if rows.size else 0.0


def _relative_determinant(M, bound_axis):
    """Determinant of M with the Hadamard bound taken over rows (axis=1) or columns (axis=0)"""
    norms = np.linalg.norm(M, axis=bound_axis)
    sign, logdet = np.linalg.slogdet(M)
    if sign == 0 or np.any(norms == 0):
        return 0.0, float(np.prod(norms)), False
    log_bound = float(np.sum(np.log(norms)))
    ok = logdet - log_bound > np.log(DETERMINANT_THRESHOLD)
    return float(sign * np.exp(logdet)), float(np.exp(log_bound)), bool(ok)


def transport_boundary(g, c, B_w=None, strict=False):
    """
    Boundary matrix B_c = c(1)^-1 B_w c(0) of the standard transport conditions

    Args:
        g: MetricGraph
        c: CoefficientField of velocities
        B_w: Optional boundary matrix replacing the graph's line-graph adjacency
        strict: Reject sources as well as sinks

    Returns:
        TransportBoundary
    """
    sinks, sources = sinks_and_sources(g)
    if sinks:
        raise HasSinkOrSourceError(f"Transport needs a sink-free graph; sinks at {list(sinks)}")
    if sources:
        if strict:
            raise HasSinkOrSourceError(f"Strict transport rejects sources at {list(sources)}")
        logger.warning("Sources at %s: edges leaving them receive no inflow", list(sources))

    if B_w is None:
        B_w = line_matrices(g).B_w
    B_w = np.asarray(B_w, dtype=float)
    if B_w.shape != (g.m, g.m) or c.m != g.m:
        raise ShapeMismatchError(f"Boundary and coefficients must match {g.m} edges")

    B_c = (B_w * c.at_zero()[None, :]) / c.at_one()[:, None]
    det, _, invertible = _relative_determinant(B_c, bound_axis=0)
    return TransportBoundary(B_c=B_c, is_semigroup=True, is_group=invertible, determinant=det)


def vertex_cluster_det(g, v, a):
    """
    Determinant of the vertex cluster at v: sum of sqrt(a_j(v)) over incident edges

    Args:
        g: MetricGraph
        v: Vertex index
        a: CoefficientField of diffusivities

    Returns:
        Positive real
    """
    total = 0.0
    for j in g.incident_edges(v):
        s = 0.0 if g.tails[j] == v else 1.0
        total += float(np.sqrt(a.evaluate(j, s)))
    return total


def diffusion_boundary_standard(g, a):
    """
    Continuity and Kirchhoff conditions in matrix form

    Continuity rows follow vertex order, then the chain pattern over the incident
    edges of each vertex in index order.
    """
    rows0 = []
    rows1 = []
    for v in range(g.n):
        star = g.incident_edges(v)
        for first, second in zip(star, star[1:]):
            row0 = np.zeros(g.m)
            row1 = np.zeros(g.m)
            for j, sign in ((first, 1.0), (second, -1.0)):
                if g.tails[j] == v:
                    row0[j] = sign
                else:
                    row1[j] = sign
            rows0.append(row0)
            rows1.append(row1)

    k0 = 2 * g.m - g.n
    V0 = np.array(rows0).reshape(k0, g.m)
    V1 = np.array(rows1).reshape(k0, g.m)

    inc = incidence(g)
    W0 = inc.Phi_plus * a.at_zero()[None, :]
    W1 = inc.Phi_minus * a.at_one()[None, :]

    boundary = DiffusionBoundary(V0=V0, V1=V1, W0=W0, W1=W1, det_value=0.0, mode="standard")
    verdict = check_diffusion_generation(boundary, a)
    return replace(boundary, det_value=verdict.determinant)


def generation_matrix(b, a):
    """Block matrix [[V1, V0], [W1 a(1)^-1/2, W0 a(0)^-1/2]]"""
    k0, m = b.V0.shape
    k1 = b.W0.shape[0]
    if b.V1.shape != (k0, m) or b.W0.shape != (k1, m) or b.W1.shape != (k1, m):
        raise ShapeMismatchError("V0/V1 and W0/W1 must share shapes and edge count")
    if k0 + k1 != 2 * m:
        raise ShapeMismatchError(f"Condition rows k0 + k1 = {k0 + k1}, expected 2m = {2 * m}")
    if a.m != m:
        raise ShapeMismatchError(f"Diffusivities cover {a.m} edges, conditions {m}")

    scale0 = 1.0 / np.sqrt(a.at_zero())
    scale1 = 1.0 / np.sqrt(a.at_one())
    return np.block([
        [b.V1, b.V0],
        [b.W1 * scale1[None, :], b.W0 * scale0[None, :]],
    ])


def check_diffusion_generation(b, a):
    """
    Determinant criterion for the analytic semigroup

    Args:
        b: DiffusionBoundary
        a: CoefficientField of diffusivities

    Returns:
        GenerationVerdict with the determinant and the nonzero flag
    """
    M = generation_matrix(b, a)
    det, bound, ok = _relative_determinant(M, bound_axis=1)
    return GenerationVerdict(determinant=det, hadamard_bound=bound, ok=ok)


def robin_boundary(K):
    """
    Fick-type conditions (f'(0), f'(1)) = K (f(0), f(1)) for a 2m x 2m matrix K
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] % 2:
        raise ShapeMismatchError(f"Robin matrix must be 2m x 2m, got {K.shape}")
    m = K.shape[0] // 2
    identity = np.eye(m)
    zero = np.zeros((m, m))
    W0 = np.vstack([-identity, zero])
    W1 = np.vstack([zero, identity])
    empty = np.zeros((0, m))
    det = float(np.linalg.det(np.block([[W1, W0]])))
    return DiffusionBoundary(V0=empty, V1=empty, W0=W0, W1=W1, det_value=det, mode="robin", robin_K=K)
