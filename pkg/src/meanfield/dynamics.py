"""N-body dynamics and the mean-field characteristic flow.

The scaled N-body system dz_i/dt = sum_j w_j K(z_i, z_j) is integrated
with fixed-step RK4 (deterministic trajectories; order checked by tests
instead of embedded error control).  With uniform weights w_j = 1/N
this is the mean-field scaling; with unnormalized weights it covers
vortex dynamics with arbitrary intensities.

The characteristic flow driven by an atomic initial measure is built by
Picard iteration of its integral equation on a uniform time grid with
trapezoidal quadrature, which reproduces the factorial decay of the
iteration increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CollisionError, DimensionMismatch, DomainError, NonConvergenceError
from .kernels import KernelSpec, weighted_field

COLLISION_THRESHOLD = 1e-6


@dataclass
class Configuration:
    """Ordered list of N phase points with per-particle weights.

    Weights default to uniform 1/N.  Probability configurations carry
    weights summing to 1; vortex configurations may carry arbitrary
    nonnegative intensities (pass normalize=False to the integrator).
    """

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        n = self.points.shape[0]
        if n == 0:
            raise ValueError("a configuration needs at least one point")
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (n,):
                raise DimensionMismatch("one weight per point required")
            if np.any(self.weights < 0):
                raise ValueError("weights must be nonnegative")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(float(self.weights.sum()) - 1.0) <= tol


class EmpiricalMeasure(Configuration):
    """Configuration interpreted as the measure sum_i w_i delta_{z_i}."""

    def __post_init__(self):
        super().__post_init__()
        if not self.is_probability():
            raise ValueError(
                f"weights sum to {self.weights.sum()!r}, not 1 within 1e-12"
            )

    def integrate(self, phi) -> float:
        """<mu, phi> for a callable on phase points."""
        vals = np.asarray([phi(z) for z in self.points], dtype=float)
        return float(np.dot(self.weights, vals))

    def first_moment(self) -> float:
        return float(np.dot(self.weights, np.linalg.norm(self.points, axis=1)))


def uniform_measure(points: np.ndarray) -> EmpiricalMeasure:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return EmpiricalMeasure(points)


@dataclass
class IntegratorSettings:
    dt: float = 1e-3
    method: str = "rk4"
    substep_tolerance: float = 1e-7
    record_every: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, N, d)
    weights: np.ndarray
    kernel: KernelSpec
    settings: IntegratorSettings
    normalize: bool = True

    @property
    def n_times(self) -> int:
        return len(self.times)

    def configuration(self, index: int) -> Configuration:
        return Configuration(self.states[index].copy(), self.weights.copy())

    def measure(self, index: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.states[index].copy(), self.weights.copy())

    def final(self) -> Configuration:
        return self.configuration(self.n_times - 1)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"t={t} not on the trajectory grid")
        return i


def _rhs(spec: KernelSpec, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return weighted_field(spec, points, points, weights, exclude_self=True)


def _check_collisions(spec: KernelSpec, points: np.ndarray, t: float) -> None:
    if spec.kind != "vortex_point":
        return
    diff = points[:, None, :] - points[None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(r, np.inf)
    dmin = float(r.min())
    if dmin < COLLISION_THRESHOLD:
        raise CollisionError(t, dmin)


def simulate_nbody(
    kernel: KernelSpec,
    initial: Configuration,
    t_final: float,
    settings: IntegratorSettings | None = None,
    normalize: bool = True,
) -> Trajectory:
    """Integrate the weighted N-body system to t_final (sign allowed).

    normalize=True treats weights as probability weights (they must sum
    to 1); normalize=False uses them verbatim as vortex intensities.
    """
    settings = settings or IntegratorSettings()
    if initial.dim != kernel.dim:
        raise DimensionMismatch(
            f"configuration dim {initial.dim} != kernel dim {kernel.dim}"
        )
    if normalize and not initial.is_probability():
        raise ValueError("probability weights must sum to 1 (or pass normalize=False)")
    w = initial.weights
    z = initial.points.copy()
    if t_final == 0.0:
        return Trajectory(
            np.array([0.0]), z[None, :, :].copy(), w.copy(), kernel, settings, normalize
        )

    n_steps = max(1, math.ceil(abs(t_final) / settings.dt - 1e-12))
    h = t_final / n_steps
    rec = settings.record_every
    times = [0.0]
    states = [z.copy()]
    _check_collisions(kernel, z, 0.0)
    for step in range(1, n_steps + 1):
        k1 = _rhs(kernel, z, w)
        k2 = _rhs(kernel, z + 0.5 * h * k1, w)
        k3 = _rhs(kernel, z + 0.5 * h * k2, w)
        k4 = _rhs(kernel, z + h * k3, w)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = step * h
        _check_collisions(kernel, z, t)
        if step % rec == 0 or step == n_steps:
            times.append(t)
            states.append(z.copy())
    return Trajectory(
        np.asarray(times), np.asarray(states), w.copy(), kernel, settings, normalize
    )


@dataclass
class PicardFlow:
    """Fixed point of the characteristic-flow integral map on a grid."""

    times: np.ndarray
    query_points: np.ndarray
    query_values: np.ndarray        # (n_times, n_query, d)
    atom_values: np.ndarray         # (n_times, n_atoms, d)
    deviations: list = field(default_factory=list)
    c1: float = 0.0                 # first moment of mu_in
    iterations: int = 0

    def at_final(self) -> np.ndarray:
        return self.query_values[-1]


def characteristic_flow_picard(
    kernel: KernelSpec,
    mu_in: EmpiricalMeasure,
    query_points: np.ndarray,
    t_final: float,
    max_iters: int = 60,
    quadrature_dt: float = 1e-3,
    tol: float = 1e-13,
) -> PicardFlow:
    """Picard construction of the mean-field characteristic flow.

    Iterates Z_{n+1}(t, zeta) = zeta + int_0^t <mu_in(dzeta'),
    K(Z_n(s, zeta), Z_n(s, zeta'))> ds with trapezoidal quadrature on a
    uniform grid (accepted bias O(quadrature_dt^2)).  The deviation
    d_n = sup_zeta |Z_{n+1} - Z_n|(t_final) / (1 + |zeta|) is recorded
    per iteration and must eventually decay factorially.
    """
    if kernel.kind == "vortex_point":
        raise DomainError("characteristic flow requires a Lipschitz kernel")
    query_points = np.atleast_2d(np.asarray(query_points, dtype=float))
    if query_points.shape[1] != kernel.dim or mu_in.dim != kernel.dim:
        raise DimensionMismatch("query/measure dimension does not match kernel")

    n_steps = max(1, math.ceil(abs(t_final) / quadrature_dt - 1e-12))
    h = t_final / n_steps if t_final != 0.0 else 0.0
    times = np.arange(n_steps + 1) * h
    atoms = mu_in.points
    w = mu_in.weights
    tracked = np.concatenate([atoms, query_points], axis=0)
    n_atoms = len(atoms)
    scale = 1.0 + np.linalg.norm(tracked, axis=1)

    # Z_0(t, zeta) = zeta on the whole grid
    Z = np.broadcast_to(tracked, (n_steps + 1,) + tracked.shape).copy()
    deviations: list[float] = []
    for iteration in range(1, max_iters + 1):
        # velocity of every tracked point against the transported atoms
        vel = np.empty_like(Z)
        for s in range(n_steps + 1):
            vel[s] = weighted_field(kernel, Z[s], Z[s, :n_atoms], w)
        # cumulative trapezoid: integral from 0 to t_s
        integral = np.zeros_like(Z)
        if n_steps > 0:
            steps = 0.5 * h * (vel[1:] + vel[:-1])
            integral[1:] = np.cumsum(steps, axis=0)
        Z_next = tracked[None, :, :] + integral
        d_n = float(
            np.max(np.linalg.norm(Z_next[-1] - Z[-1], axis=1) / scale)
        )
        deviations.append(d_n)
        Z = Z_next
        if d_n <= tol:
            break
    else:
        raise NonConvergenceError(
            f"Picard iteration did not reach {tol:g} in {max_iters} iterations",
            deviations,
        )
    return PicardFlow(
        times=times,
        query_points=query_points,
        query_values=Z[:, n_atoms:, :].copy(),
        atom_values=Z[:, :n_atoms, :].copy(),
        deviations=deviations,
        c1=mu_in.first_moment(),
        iterations=len(deviations),
    )


def pushforward(flow: PicardFlow, mu_in: EmpiricalMeasure) -> EmpiricalMeasure:
    """Transport mu_in along the flow: atoms move, weights are unchanged."""
    if flow.atom_values.shape[1] != mu_in.n:
        raise DimensionMismatch("flow was not evaluated on the atoms of mu_in")
    return EmpiricalMeasure(flow.atom_values[-1].copy(), mu_in.weights.copy())


def weak_solution_residual(
    kernel: KernelSpec,
    trajectory: Trajectory,
    phi,
    grad_phi,
    t: float,
) -> float:
    """|d/dt <mu(t), phi> - <mu(t), (K mu(t)) . grad phi>| at a grid time.

    The time derivative is a centered difference on the trajectory grid,
    so the residual is O(dt^2) plus integrator error.  phi and grad_phi
    are paired value/gradient callables on phase points.
    """
    i = trajectory.index_of(t)
    if i == 0 or i == trajectory.n_times - 1:
        raise DomainError("centered difference needs an interior grid point")
    w = trajectory.weights
    dt_minus = trajectory.times[i] - trajectory.times[i - 1]
    dt_plus = trajectory.times[i + 1] - trajectory.times[i]
    if not math.isclose(dt_minus, dt_plus, rel_tol=1e-9):
        raise DomainError("centered difference needs a uniform local grid")
    pair_vals = []
    for j in (i - 1, i + 1):
        vals = np.asarray([phi(z) for z in trajectory.states[j]], dtype=float)
        pair_vals.append(float(np.dot(w, vals)))
    lhs = (pair_vals[1] - pair_vals[0]) / (dt_minus + dt_plus)

    points = trajectory.states[i]
    field_vals = weighted_field(kernel, points, points, w, exclude_self=True)
    grads = np.asarray([grad_phi(z) for z in points], dtype=float)
    rhs = float(np.dot(w, np.sum(field_vals * grads, axis=1)))
    return abs(lhs - rhs)


def trajectory_rows(trajectory: Trajectory):
    """Rows (t, particle, x_0..x_{d-1}) for CSV export."""
    for i, t in enumerate(trajectory.times):
        for p in range(trajectory.states.shape[1]):
            yield (float(t), p, *map(float, trajectory.states[i, p]))
