"""
Aggregation - fast transport or fast diffusion against their limiting ODEs on edge masses
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import trapezoid

from core.coefficients import CoefficientField
from core.diffusion import assemble, evolve_diffusion, initial_state
from core.errors import (
    KernelDimensionNotOneError,
    NegativeBoundaryEntryError,
    ShapeMismatchError,
    ValidationError,
)
from core.generation import robin_boundary
from core.spectral import perron_pair, spectral_projection
from core.transport import edge_masses, init_state, trajectory
from utils.helper import parallel_map

logger = logging.getLogger(__name__)

CORRECTOR_MODES = 64
CORRECTOR_POINTS = 2049
KERNEL_RCOND = 1e-10
FLOW_CELLS = 20


@dataclass(frozen=True, eq=False)
class Projections:
    """Pi1 = projection onto ker(I - K) along ran(I - K); Pi0 = r l^T / (l . r) for ker L"""
    Pi1: Optional[np.ndarray] = None
    Pi0: Optional[np.ndarray] = None

    @staticmethod
    def P(state):
        """Edgewise integral of a transport GraphState"""
        return edge_masses(state)


def kernel_projection(L):
    """Projection onto the one-dimensional kernel of L along its range"""
    L = np.asarray(L, dtype=float)
    right = scipy.linalg.null_space(L, rcond=KERNEL_RCOND)
    left = scipy.linalg.null_space(L.T, rcond=KERNEL_RCOND)
    if right.shape[1] != 1 or left.shape[1] != 1:
        raise KernelDimensionNotOneError(f"Kernel dimension {right.shape[1]}, expected 1")
    r = right[:, 0]
    l = left[:, 0]
    return np.outer(r, l) / float(l @ r)


def build_projections(K=None, L=None):
    return Projections(
        Pi1=None if K is None else spectral_projection(K, 1.0),
        Pi0=None if L is None else kernel_projection(L),
    )


@dataclass(frozen=True, eq=False)
class OdeTrajectory:
    times: np.ndarray
    states: np.ndarray
    reference: Optional[np.ndarray] = None
    limit: Optional[np.ndarray] = None
    rate: Optional[float] = None

    def to_dict(self):
        data = {"times": self.times.tolist(), "states": self.states.tolist()}
        if self.reference is not None:
            data["reference"] = self.reference.tolist()
        if self.limit is not None:
            data["limit"] = self.limit.tolist()
        if self.rate is not None:
            data["rate"] = self.rate
        return data


def rk4(rhs, x0, T, dt):
    """
    Classical fourth-order Runge-Kutta

    Args:
        rhs: Callable x -> dx/dt
        x0: Initial vector
        T: Final time
        dt: Step (shrunk so that T is a whole number of steps)

    Returns:
        (times, states) with states[k] at times[k]
    """
    if dt <= 0 or T < 0:
        raise ValidationError(f"RK4 needs dt > 0 and T >= 0, got dt = {dt}, T = {T}")
    steps = max(1, int(np.ceil(T / dt - 1e-9))) if T > 0 else 0
    h = T / steps if steps else 0.0
    states = np.empty((steps + 1, len(x0)))
    x = np.asarray(x0, dtype=float)
    states[0] = x
    for k in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[k + 1] = x
    return np.linspace(0.0, T, steps + 1), states


def aggregated_flow_ode(K, Q, x0, T, dt=1e-3):
    """
    Limit dynamics u' = Pi1 Q Pi1 u of fast transport with rare mutations

    Args:
        K: Mitosis matrix with semisimple eigenvalue 1
        Q: Mutation matrix
        x0: Initial edge masses
        T: Final time
        dt: RK4 step

    Returns:
        OdeTrajectory with the RK4 states and, for a simple eigenvalue 1, the closed form
        alpha(t) e_r with alpha(t) = exp((e_l . Q e_r) t) (e_l . x0)
    """
    K = np.asarray(K, dtype=float)
    Q = np.asarray(Q, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if K.shape != Q.shape or K.shape != (x0.size, x0.size):
        raise ShapeMismatchError(f"K, Q and x0 disagree: {K.shape}, {Q.shape}, {x0.shape}")
    Pi1 = spectral_projection(K, 1.0)
    generator = Pi1 @ Q @ Pi1
    times, states = rk4(lambda x: generator @ x, Pi1 @ x0, T, dt)

    reference = None
    rate = None
    if np.linalg.matrix_rank(Pi1) == 1:
        pair = perron_pair(K, target=1.0)
        rate = float(pair.left @ Q @ pair.right)
        alpha = np.exp(rate * times) * float(pair.left @ x0)
        reference = alpha[:, None] * pair.right[None, :]
    return OdeTrajectory(times=times, states=states, reference=reference, rate=rate)


def aggregated_diffusion_ode(L, x0, T, dt=1e-3):
    """
    Limit dynamics u' = -L u of fast diffusion with slow exchange

    Args:
        L: Kirchhoff matrix of the exchange (K_minus of a synaptic model)
        x0: Initial edge masses
        T: Final time
        dt: RK4 step

    Returns:
        OdeTrajectory with limit Pi0 x0 and the nonzero eigenvalue closest to zero of -L as rate
    """
    L = np.asarray(L, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if L.shape != (x0.size, x0.size):
        raise ShapeMismatchError(f"L is {L.shape}, x0 has {x0.size} entries")
    times, states = rk4(lambda x: -(L @ x), x0, T, dt)
    Pi0 = kernel_projection(L)
    values = np.linalg.eigvals(-L)
    nonzero = values[np.abs(values) > 1e-8 * max(1.0, np.abs(values).max())]
    rate = float(np.max(nonzero.real)) if nonzero.size else 0.0
    return OdeTrajectory(times=times, states=states, limit=Pi0 @ x0, rate=rate)


def _profile(x0):
    """Initial data for a solver: a vector of edge constants stays as is, profiles become f(j, s)"""
    if callable(x0):
        return x0
    values = [np.asarray(v, dtype=float) for v in x0]
    if all(v.ndim == 0 for v in values):
        return np.array([float(v) for v in values])
    return values


def flow_boundary(K, Q, eps):
    B = np.asarray(K, dtype=float) + eps * np.asarray(Q, dtype=float)
    if np.any(B < 0):
        i, j = np.argwhere(B < 0)[0]
        raise NegativeBoundaryEntryError(f"K + eps Q has entry {B[i, j]:.3g} at ({i}, {j}) for eps = {eps}")
    return B


def epsilon_flow(K, Q, eps, x0, T, cells=FLOW_CELLS, graph=None, every=1):
    """
    Transport with speed 1/eps and boundary matrix K + eps Q

    Args:
        K: Mitosis matrix
        Q: Mutation matrix
        eps: Time-scale parameter
        x0: Edge constants or per-edge profiles on [0, 1]
        T: Final time
        cells: Grid cells per edge
        graph: Optional realizing MetricGraph
        every: Record every this many steps

    Returns:
        List of GraphState
    """
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    B = flow_boundary(K, Q, eps)
    m = B.shape[0]
    c = CoefficientField.constant(m, 1.0 / eps, kind="c")
    data = _profile(x0)
    if isinstance(data, np.ndarray):
        f = lambda j, s, data=data: np.full_like(s, data[j])
    else:
        f = data
    state = init_state(graph, B, c, f, eps / cells, strict=True)
    return trajectory(state, T, every)


@dataclass(frozen=True, eq=False)
class ConvergenceStudy:
    mode: str
    eps: Tuple[float, ...]
    times: Tuple[np.ndarray, ...]
    errors: dict
    t_min: float = 0.0
    extra: dict = field(default_factory=dict)

    def sup(self, name):
        return tuple(float(np.max(curve)) if len(curve) else 0.0 for curve in self.errors[name])

    def decreasing(self, name, strict=True):
        values = self.sup(name)
        pairs = zip(values, values[1:])
        if strict:
            return all(b < a for a, b in pairs)
        return all(b <= a for a, b in pairs)

    def to_dict(self):
        data = {
            "mode": self.mode,
            "eps": list(self.eps),
            "t_min": self.t_min,
            "sup_errors": {name: list(self.sup(name)) for name in self.errors},
            "verdicts": {
                name: {"decreasing": self.decreasing(name), "nonincreasing": self.decreasing(name, strict=False)}
                for name in self.errors
            },
        }
        data.update(self.extra)
        return data


def _flow_run(K, Q, x0, T, cells, graph, t_min):
    def run(eps):
        states = epsilon_flow(K, Q, eps, x0, T, cells=cells, graph=graph)
        Pi1 = spectral_projection(K, 1.0)
        generator = Pi1 @ np.asarray(Q, dtype=float) @ Pi1
        start = Pi1 @ edge_masses(states[0])
        times = np.array([s.t for s in states])
        e1 = []
        e2 = []
        for state, t in zip(states, times):
            limit = scipy.linalg.expm(generator * t) @ start
            e2.append(float(np.abs(Pi1 @ edge_masses(state) - limit).sum()))
            if t >= t_min:
                e1.append(sum(
                    float(np.dot(np.abs(u - limit[j]), w))
                    for j, (u, w) in enumerate(zip(state.samples, state.widths))
                ))
        logger.info("Flow eps = %g: sup e1 = %.3g, sup e2 = %.3g", eps, max(e1, default=0.0), max(e2))
        return times, np.array(e1), np.array(e2)
    return run


def flow_convergence_study(K, Q, x0, eps_list, T, cells=FLOW_CELLS, t_min=0.0, graph=None):
    """
    Distance between eps-transport and the aggregated ODE for a list of eps

    e1: sup over [t_min, T] of the L1 distance to the edgewise-constant ODE solution;
    e2: sup over [0, T] of the l1 distance between Pi1 P u_eps and the ODE solution.

    Returns:
        ConvergenceStudy with curves e1 and e2 per eps
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError(f"eps values must decrease, got {eps_list}")
    runs = parallel_map(_flow_run(K, Q, x0, T, cells, graph, t_min), eps_list)
    return ConvergenceStudy(
        mode="flow",
        eps=tuple(eps_list),
        times=tuple(r[0] for r in runs),
        errors={"e1": tuple(r[1] for r in runs), "e2": tuple(r[2] for r in runs)},
        t_min=t_min,
    )


@dataclass(frozen=True, eq=False)
class EpsilonDiffusionRun:
    eps: float
    times: np.ndarray
    masses: np.ndarray
    generator: object
    final: object


def epsilon_diffusion(g, flux, eps, x0, T, cells=32, dt=1e-3):
    """
    Diffusion with diffusivity 1/eps and Robin matrix eps C

    Args:
        g: MetricGraph (or None for an abstract bundle)
        flux: 2m x 2m exchange matrix C with (u'(0), u'(1)) = C (u(0), u(1))
        eps: Time-scale parameter
        x0: Edge constants or per-edge profiles on [0, 1]
        T: Final time
        cells: Interior nodes per edge
        dt: Time step

    Returns:
        EpsilonDiffusionRun with the edge masses P u_eps after every step
    """
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    flux = np.asarray(flux, dtype=float)
    m = flux.shape[0] // 2
    a = CoefficientField.constant(m, 1.0 / eps, kind="a")
    gen = assemble(g, a, robin_boundary(eps * flux), cells)
    data = _profile(x0)
    if isinstance(data, np.ndarray):
        data = list(data)
    state = initial_state(gen, data, dt=dt)

    times = [0.0]
    masses = [gen.edge_masses(state.values)]

    def record(current):
        times.append(current.t)
        masses.append(gen.edge_masses(current.values))

    final = evolve_diffusion(gen, state, T, observer=record)
    return EpsilonDiffusionRun(eps=eps, times=np.array(times), masses=np.array(masses), generator=gen, final=final)


def diffusion_convergence_study(g, flux, L, x0, eps_list, T, t_min=0.5, cells=32, dt=1e-3):
    """
    Distance between eps-diffusion edge masses and the aggregated ODE u' = -L u

    Returns:
        ConvergenceStudy with curve "mass" = l1 distance on [t_min, T] per eps
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError(f"eps values must decrease, got {eps_list}")
    L = np.asarray(L, dtype=float)

    def run(eps):
        result = epsilon_diffusion(g, flux, eps, x0, T, cells=cells, dt=dt)
        start = result.masses[0]
        errors = []
        drift = []
        total0 = float(start.sum())
        for t, masses in zip(result.times, result.masses):
            drift.append(abs(float(masses.sum()) - total0) / max(abs(total0), 1e-300))
            if t >= t_min - 1e-12:
                limit = scipy.linalg.expm(-L * t) @ start
                errors.append(float(np.abs(masses - limit).sum()))
        logger.info("Diffusion eps = %g: sup error %.3g", eps, max(errors, default=0.0))
        return result.times, np.array(errors), max(drift)

    runs = parallel_map(run, eps_list)
    return ConvergenceStudy(
        mode="diffusion",
        eps=tuple(eps_list),
        times=tuple(r[0] for r in runs),
        errors={"mass": tuple(r[1] for r in runs)},
        t_min=t_min,
        extra={"mass_drift": [r[2] for r in runs]},
    )


class BoundaryLayer:
    """w(tau)(x) = sum_n exp(-(n pi)^2 tau) a_n cos(n pi x)"""

    def __init__(self, coefficients, tau):
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.tau = float(tau)
        n = np.arange(1, self.coefficients.size + 1)
        self._damped = np.exp(-(n * np.pi) ** 2 * self.tau) * self.coefficients
        self._modes = n * np.pi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.cos(np.multiply.outer(x, self._modes)) @ self._damped

    def bound(self):
        """exp(-pi^2 tau) sum |a_n|, an upper bound of sup |w(tau)|"""
        return float(np.exp(-np.pi**2 * self.tau) * np.abs(self.coefficients).sum())


def boundary_layer_corrector(profile, tau, n_max=CORRECTOR_MODES):
    """
    Initial layer of one edge in the fast-diffusion limit

    a_n are the cosine coefficients of x0 - P x0 on [0, 1].

    Args:
        profile: Callable x0(x) or samples on a uniform grid of [0, 1]
        tau: Fast time t / eps
        n_max: Number of cosine modes

    Returns:
        BoundaryLayer
    """
    x = np.linspace(0.0, 1.0, CORRECTOR_POINTS)
    if callable(profile):
        values = np.asarray(profile(x), dtype=float) * np.ones_like(x)
    else:
        samples = np.asarray(profile, dtype=float)
        values = np.interp(x, np.linspace(0.0, 1.0, samples.size), samples)
    layer = values - trapezoid(values, x)
    n = np.arange(1, n_max + 1)
    coefficients = 2.0 * trapezoid(layer[None, :] * np.cos(np.multiply.outer(n * np.pi, x)), x, axis=1)
    return BoundaryLayer(coefficients, tau)
