"""Quantum mean-field verification on a periodic 1D grid.

Everything lives on a torus of length Lambda sampled at M points, so
Fourier transforms replace the continuum Laplacian and convolutions
exactly.  Inner products, traces and L^p norms all carry the quadrature
weight h = Lambda / M per grid index; with that weighting the discrete
quantities converge to their continuum counterparts.

Solvers use Strang splitting (half potential kick, full kinetic drift
in Fourier space, half kick).  Both sub-flows are pointwise phase
multiplications or unitary FFT conjugations, so mass is conserved to
round-off at every step and the bosonic permutation symmetry of the
N-particle state is preserved.

The convergence functional E_N = 1 - <psi| D_{N:1} |psi> of the first
marginal against the Hartree state is computed together with its
Gronwall envelope (exp|int_0^t 10 ||V||_{2r} ||psi(s)||_{2r'} ds| - 1)/N.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError

DEFAULT_LENGTH = 2.0 * math.pi
MEMORY_GUARD = 1 << 24    # max amplitudes in a tensor state

POTENTIAL_KINDS = ("cosine", "gaussian_well", "soft_coulomb")


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid: M points (power of two) on [0, length)."""

    m: int
    length: float = DEFAULT_LENGTH

    def __post_init__(self):
        if self.m < 8 or (self.m & (self.m - 1)) != 0:
            raise ValueError("M must be a power of two, at least 8")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def h(self) -> float:
        return self.length / self.m

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.m) * self.h

    @property
    def k(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.m, d=self.h)


def grid_norm(grid: Grid1D, amplitudes: np.ndarray) -> float:
    """L^2 norm with h^(number of axes) quadrature weighting."""
    power = amplitudes.ndim
    return math.sqrt(grid.h**power * float(np.sum(np.abs(amplitudes) ** 2)))


def lp_norm(grid: Grid1D, values: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    return (grid.h * float(np.sum(np.abs(values) ** p))) ** (1.0 / p)


@dataclass
class WaveFunction:
    grid: Grid1D
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.grid.m,):
            raise DimensionMismatch("amplitudes must match the grid size")
        if abs(grid_norm(self.grid, self.amplitudes) - 1.0) > 1e-10:
            raise ValueError("wave function must be L2-normalized to 1e-10")

    def norm(self) -> float:
        return grid_norm(self.grid, self.amplitudes)


def plane_wave(grid: Grid1D, mode: int = 1) -> WaveFunction:
    """exp(i k x) / sqrt(Lambda); exactly normalized on the grid."""
    k = 2.0 * math.pi * mode / grid.length
    amp = np.exp(1j * k * grid.x) / math.sqrt(grid.length)
    return WaveFunction(grid, amp)


def gaussian_packet(
    grid: Grid1D, center: float | None = None, width: float = 0.6, momentum: float = 0.0
) -> WaveFunction:
    """Periodized Gaussian bump, normalized on the grid."""
    c = grid.length / 2.0 if center is None else center
    x = grid.x
    amp = np.zeros(grid.m, dtype=complex)
    for image in range(-3, 4):
        dx = x - c + image * grid.length
        amp += np.exp(-(dx * dx) / (4.0 * width * width))
    amp *= np.exp(1j * momentum * x)
    amp /= grid_norm(grid, amp)
    return WaveFunction(grid, amp)


@dataclass(frozen=True)
class PotentialSpec:
    """Even, real, bounded potential, periodicized on the torus."""

    kind: str
    amplitude: float = 1.0
    width: float = 0.5
    eps: float = 0.1

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    def values(self, grid: Grid1D) -> np.ndarray:
        x = grid.x
        L = grid.length
        if self.kind == "cosine":
            return self.amplitude * np.cos(2.0 * math.pi * x / L)
        if self.kind == "gaussian_well":
            out = np.zeros_like(x)
            for image in range(-4, 5):
                dx = x + image * L
                out += np.exp(-(dx * dx) / (2.0 * self.width**2))
            return -self.amplitude * out
        # soft_coulomb on the wrapped distance to the origin
        dist = np.minimum(x, L - x)
        return self.amplitude / np.sqrt(dist * dist + self.eps**2)

    def evenness_defect(self, grid: Grid1D) -> float:
        v = self.values(grid)
        return float(np.max(np.abs(v - v[(-np.arange(grid.m)) % grid.m])))


def cosine_potential(amplitude: float) -> PotentialSpec:
    return PotentialSpec("cosine", amplitude=amplitude)


def gaussian_well(depth: float, width: float) -> PotentialSpec:
    return PotentialSpec("gaussian_well", amplitude=depth, width=width)


def soft_coulomb(strength: float, eps: float) -> PotentialSpec:
    return PotentialSpec("soft_coulomb", amplitude=strength, eps=eps)


def potential_from_params(params: dict) -> PotentialSpec:
    kind = params.get("kind")
    if kind == "cosine":
        return cosine_potential(float(params.get("a", 0.5)))
    if kind == "gaussian_well":
        return gaussian_well(float(params["depth"]), float(params["width"]))
    if kind == "soft_coulomb":
        return soft_coulomb(float(params["strength"]), float(params["eps"]))
    raise ValueError(f"unknown potential kind {kind!r}")


# ---------------------------------------------------------------------------
# Hartree solver


def hartree_energy(grid: Grid1D, v_values: np.ndarray, psi: np.ndarray) -> float:
    """Kinetic plus half the self-interaction energy."""
    psi_hat = np.fft.fft(psi)
    kinetic = 0.5 * grid.h / grid.m * float(np.sum(grid.k**2 * np.abs(psi_hat) ** 2))
    rho = np.abs(psi) ** 2
    w = grid.h * np.real(np.fft.ifft(np.fft.fft(v_values) * np.fft.fft(rho)))
    potential = 0.5 * grid.h * float(np.sum(w * rho))
    return kinetic + potential


@dataclass
class HartreeTrajectory:
    grid: Grid1D
    times: np.ndarray
    states: np.ndarray          # (n_times, M) complex
    norms: np.ndarray           # per recorded step
    energies: np.ndarray

    def state(self, index: int) -> np.ndarray:
        return self.states[index]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"t={t} not on the trajectory grid")
        return i


def solve_hartree(
    psi_in: WaveFunction,
    potential: PotentialSpec,
    t_final: float,
    dt: float,
    record_every: int = 1,
) -> HartreeTrajectory:
    """Strang-split self-consistent evolution.

    The potential half-kicks multiply by a phase, so |psi|^2 (and with
    it the convolution V * |psi|^2) is constant during them: each kick
    solves its sub-flow exactly and mass is conserved to round-off.
    """
    grid = psi_in.grid
    if t_final < 0:
        raise DomainError("backward Hartree evolution is not supported")
    if dt <= 0 or dt > grid.h**2:
        raise DomainError(f"dt must lie in (0, h^2] = (0, {grid.h**2:.3e}]")
    v_values = potential.values(grid)
    v_hat = np.fft.fft(v_values)
    psi = psi_in.amplitudes.copy()

    n_steps = max(1, math.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    h_step = t_final / n_steps if n_steps else 0.0
    phase = np.exp(-0.5j * h_step * grid.k**2)

    def half_kick(p):
        rho = np.abs(p) ** 2
        w = grid.h * np.real(np.fft.ifft(v_hat * np.fft.fft(rho)))
        return p * np.exp(-0.5j * h_step * w)

    times = [0.0]
    states = [psi.copy()]
    norms = [grid_norm(grid, psi)]
    energies = [hartree_energy(grid, v_values, psi)]
    for step in range(1, n_steps + 1):
        psi = half_kick(psi)
        psi = np.fft.ifft(np.fft.fft(psi) * phase)
        psi = half_kick(psi)
        if step % record_every == 0 or step == n_steps:
            times.append(step * h_step)
            states.append(psi.copy())
            norms.append(grid_norm(grid, psi))
            energies.append(hartree_energy(grid, v_values, psi))
    return HartreeTrajectory(
        grid, np.asarray(times), np.asarray(states),
        np.asarray(norms), np.asarray(energies),
    )


# ---------------------------------------------------------------------------
# N-body solver


@dataclass
class TensorWaveFunction:
    grid: Grid1D
    n: int
    amplitudes: np.ndarray      # shape (M,) * n

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.grid.m**self.n > MEMORY_GUARD:
            raise MemoryError(
                f"M^N = {self.grid.m**self.n} exceeds the amplitude guard {MEMORY_GUARD}"
            )
        if self.amplitudes.shape != (self.grid.m,) * self.n:
            raise DimensionMismatch("amplitudes must have shape (M,)*N")
        if abs(grid_norm(self.grid, self.amplitudes) - 1.0) > 1e-10:
            raise ValueError("tensor state must be normalized to 1e-10")

    def norm(self) -> float:
        return grid_norm(self.grid, self.amplitudes)

    def symmetry_defect(self) -> float:
        """Max amplitude change under any transposition of particles."""
        worst = 0.0
        for a, b in itertools.combinations(range(self.n), 2):
            swapped = np.swapaxes(self.amplitudes, a, b)
            worst = max(worst, float(np.max(np.abs(self.amplitudes - swapped))))
        return worst


def tensor_power(psi: WaveFunction, n: int) -> TensorWaveFunction:
    amp = psi.amplitudes
    out = amp
    for _ in range(n - 1):
        out = np.multiply.outer(out, amp)
    # renormalize round-off so the tensor constructor's check is exact
    out = out / grid_norm(psi.grid, out)
    return TensorWaveFunction(psi.grid, n, out)


def pair_potential_table(grid: Grid1D, potential: PotentialSpec) -> np.ndarray:
    """V(x_a - x_b) as an (M, M) periodic table."""
    v = potential.values(grid)
    idx = (np.arange(grid.m)[:, None] - np.arange(grid.m)[None, :]) % grid.m
    return v[idx]


def interaction_grid(grid: Grid1D, potential: PotentialSpec, n: int) -> np.ndarray:
    """(1/N) sum_{a<b} V(x_a - x_b) on the N-particle grid."""
    table = pair_potential_table(grid, potential)
    shape = (grid.m,) * n
    u = np.zeros(shape)
    for a, b in itertools.combinations(range(n), 2):
        view_shape = [1] * n
        view_shape[a] = grid.m
        view_shape[b] = grid.m
        moved = table.reshape(grid.m, grid.m)
        expand = np.moveaxis(
            moved.reshape((grid.m, grid.m) + (1,) * (n - 2)),
            (0, 1),
            (a, b),
        )
        u = u + np.broadcast_to(expand, shape)
    return u / n


@dataclass
class TensorTrajectory:
    grid: Grid1D
    n: int
    times: np.ndarray
    snapshots: list                    # TensorWaveFunction per recorded time
    norm_history: np.ndarray           # per integration step, including t=0

    def snapshot(self, index: int) -> "TensorWaveFunction":
        return self.snapshots[index]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"t={t} not on the recorded grid")
        return i


def solve_nbody_schrodinger(
    psi_in: TensorWaveFunction,
    potential: PotentialSpec,
    t_final: float,
    dt: float,
    record_every: int = 1,
) -> TensorTrajectory:
    """Strang-split N-particle evolution in the mean-field scaling.

    Kinetic drift is a Fourier phase along every axis; the interaction
    kick multiplies by exp(-i dt U) with U = (1/N) sum_{k<l} V(x_k-x_l).
    Both commute with particle permutations, so bosonic symmetry of the
    initial state survives to round-off.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    if t_final < 0:
        raise DomainError("backward evolution is not supported")
    grid = psi_in.grid
    n = psi_in.n
    n_steps = max(1, math.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    h_step = t_final / n_steps if n_steps else 0.0
    u = interaction_grid(grid, potential, n)
    half_kick = np.exp(-0.5j * h_step * u)
    ksq = grid.k**2
    total_ksq = np.zeros((grid.m,) * n)
    for axis in range(n):
        shape = [1] * n
        shape[axis] = grid.m
        total_ksq = total_ksq + ksq.reshape(shape)
    drift = np.exp(-0.5j * h_step * total_ksq)

    psi = psi_in.amplitudes.copy()
    times = [0.0]
    snapshots = [TensorWaveFunction(grid, n, psi.copy())]
    norms = [grid_norm(grid, psi)]
    for step in range(1, n_steps + 1):
        psi *= half_kick
        psi = np.fft.ifftn(np.fft.fftn(psi) * drift)
        psi *= half_kick
        norms.append(grid_norm(grid, psi))
        if step % record_every == 0 or step == n_steps:
            times.append(step * h_step)
            snapshots.append(TensorWaveFunction(grid, n, psi.copy()))
    return TensorTrajectory(grid, n, np.asarray(times), snapshots, np.asarray(norms))


# ---------------------------------------------------------------------------
# density matrices


@dataclass
class DensityMatrix:
    """k-particle density operator as a grid kernel matrix.

    ``matrix[i, j]`` holds the kernel D(X_i, Y_j) on flattened k-point
    indices; the operator acts with quadrature weight h^k, so operator
    eigenvalues are weight * eig(matrix) and trace(D) = weight * tr(matrix).
    """

    matrix: np.ndarray
    weight: float
    particles: int = 1

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch("density matrix must be square")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix))) * self.weight

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) * self.weight

    def eigenvalues(self) -> np.ndarray:
        sym = 0.5 * (self.matrix + self.matrix.conj().T)
        return np.linalg.eigvalsh(sym) * self.weight

    def min_eigenvalue(self) -> float:
        return float(np.min(self.eigenvalues()))


def pure_state_density(psi: WaveFunction) -> DensityMatrix:
    amp = psi.amplitudes
    return DensityMatrix(np.outer(amp, amp.conj()), psi.grid.h, particles=1)


def reduced_density(psi: TensorWaveFunction, k: int) -> DensityMatrix:
    """Partial trace of |Psi><Psi| down to the first k particles."""
    if not 1 <= k < psi.n:
        raise ValueError("marginal order k must satisfy 1 <= k < N")
    m = psi.grid.m
    if m ** (2 * k) > MEMORY_GUARD:
        raise MemoryError("reduced density would exceed the memory guard")
    a = psi.amplitudes.reshape(m**k, m ** (psi.n - k))
    kernel = (a @ a.conj().T) * psi.grid.h ** (psi.n - k)
    return DensityMatrix(kernel, psi.grid.h**k, particles=k)


def partial_trace(density: DensityMatrix, grid: Grid1D) -> DensityMatrix:
    """Trace out the last particle of a k-particle density (k >= 2)."""
    if density.particles < 2:
        raise ValueError("nothing to trace out")
    m = grid.m
    k = density.particles
    t = density.matrix.reshape(m ** (k - 1), m, m ** (k - 1), m)
    kernel = np.einsum("azbz->ab", t) * grid.h
    return DensityMatrix(kernel, grid.h ** (k - 1), particles=k - 1)


def trace_norm(density: DensityMatrix, hermiticity_tol: float = 1e-8) -> float:
    """Sum of absolute operator eigenvalues (trace norm of a Hermitian kernel)."""
    if density.hermiticity_defect() > hermiticity_tol:
        raise ValueError("matrix is not Hermitian within tolerance")
    return float(np.sum(np.abs(density.eigenvalues())))


def subtract(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    if a.dim != b.dim or a.weight != b.weight:
        raise DimensionMismatch("density matrices live on different spaces")
    return DensityMatrix(a.matrix - b.matrix, a.weight, a.particles)


# ---------------------------------------------------------------------------
# convergence functional and bound


def pickl_functional(density: DensityMatrix, psi: WaveFunction) -> float:
    """E = 1 - <psi| D |psi>, clamped to [0, 1]."""
    if density.dim != psi.grid.m or density.particles != 1:
        raise DimensionMismatch("functional needs a single-particle density")
    h = psi.grid.h
    amp = psi.amplitudes
    overlap = float(np.real(amp.conj() @ (density.matrix @ amp))) * h * h
    e = 1.0 - overlap
    if e < -1e-10 or e > 1.0 + 1e-10:
        raise ValueError(f"functional {e!r} outside [0,1] beyond clamping slack")
    return min(max(e, 0.0), 1.0)


def pickl_bound(
    hartree: HartreeTrajectory,
    potential: PotentialSpec,
    n_particles: int,
    r: float = 8.0,
) -> np.ndarray:
    """Gronwall envelope (exp|int 10 ||V||_2r ||psi||_2r' ds| - 1) / N.

    Evaluated cumulatively on the trajectory's time grid with
    trapezoidal quadrature.  r = 8 emulates the bounded-potential
    r -> infinity choice; the grid norms carry the h weighting.
    """
    if r < 1:
        raise ValueError("Hoelder exponent r must be >= 1")
    grid = hartree.grid
    v_norm = lp_norm(grid, potential.values(grid), 2.0 * r)
    rp = r / (r - 1.0) if r > 1 else math.inf
    p_psi = 2.0 * rp
    integrand = np.asarray(
        [10.0 * v_norm * lp_norm(grid, s, p_psi) for s in hartree.states]
    )
    out = np.zeros(len(hartree.times))
    for i in range(1, len(out)):
        dt = hartree.times[i] - hartree.times[i - 1]
        out[i] = out[i - 1] + 0.5 * dt * (integrand[i] + integrand[i - 1])
    return (np.exp(np.abs(out)) - 1.0) / n_particles


def _two_particle_kernel(snap: TensorWaveFunction) -> np.ndarray:
    """Kernel of D_{N:2} as an (M, M, M, M) array [x1, x2, y1, y2]."""
    m = snap.grid.m
    if snap.n == 2:
        amp = snap.amplitudes
        return amp[:, :, None, None] * np.conj(amp)[None, None, :, :]
    return reduced_density(snap, 2).matrix.reshape(m, m, m, m)


def bbgky_first_marginal_residual(
    trajectory: TensorTrajectory, potential: PotentialSpec, index: int
) -> float:
    """Residual of the k=1 marginal hierarchy equation at a grid time.

    Checks i dD_{N:1}/dt = -(1/2)[Lap, D_{N:1}] + ((N-1)/N)[V_12, D_{N:2}]_{:1}
    with a centered time difference, so the result is O(dt^2) plus
    splitting error.  h-weighted Frobenius norm; N in {2, 3} only.
    """
    n = trajectory.n
    if n not in (2, 3):
        raise ValueError("residual check implemented for N in {2, 3}")
    if index <= 0 or index >= len(trajectory.times) - 1:
        raise DomainError("centered difference needs an interior snapshot")
    grid = trajectory.grid
    dt_minus = trajectory.times[index] - trajectory.times[index - 1]
    dt_plus = trajectory.times[index + 1] - trajectory.times[index]
    d1_minus = reduced_density(trajectory.snapshot(index - 1), 1).matrix
    d1_plus = reduced_density(trajectory.snapshot(index + 1), 1).matrix
    ddt = (d1_plus - d1_minus) / (dt_minus + dt_plus)

    d1 = reduced_density(trajectory.snapshot(index), 1).matrix
    ksq = grid.k**2
    lap_x = np.fft.ifft(-(ksq[:, None]) * np.fft.fft(d1, axis=0), axis=0)
    lap_y = np.fft.ifft(-(ksq[None, :]) * np.fft.fft(d1, axis=1), axis=1)
    commutator_lap = lap_x - lap_y

    table = pair_potential_table(grid, potential)
    d2 = _two_particle_kernel(trajectory.snapshot(index))
    interaction = grid.h * (
        np.einsum("xz,xzyz->xy", table, d2) - np.einsum("yz,xzyz->xy", table, d2)
    )
    residual = 1j * ddt + 0.5 * commutator_lap - ((n - 1) / n) * interaction
    return grid.h * float(np.linalg.norm(residual))


def hartree_limit_experiment(
    psi_in: WaveFunction,
    potential: PotentialSpec,
    n_list,
    t_final: float,
    dt: float,
    record_every: int = 100,
    r: float = 8.0,
) -> dict:
    """E_N(t), its Gronwall envelope and the trace-norm distance per N."""
    hartree = solve_hartree(psi_in, potential, t_final, dt, record_every=record_every)
    bound = pickl_bound(hartree, potential, 1, r=r)   # N folded in below
    series = {}
    for n in sorted(int(v) for v in n_list):
        psi0 = tensor_power(psi_in, n)
        traj = solve_nbody_schrodinger(
            psi0, potential, t_final, dt, record_every=record_every
        )
        if len(traj.times) != len(hartree.times):
            raise RuntimeError("recording grids diverged between solvers")
        e_vals = []
        dist_vals = []
        for i in range(len(traj.times)):
            d1 = reduced_density(traj.snapshot(i), 1)
            psi_t = WaveFunction(hartree.grid, hartree.states[i])
            e_vals.append(pickl_functional(d1, psi_t))
            dist_vals.append(trace_norm(subtract(d1, pure_state_density(psi_t))))
        series[n] = {
            "times": traj.times.copy(),
            "e_n": np.asarray(e_vals),
            "bound": bound / n,
            "trace_dist": np.asarray(dist_vals),
            "norm_drift": float(np.max(np.abs(traj.norm_history - 1.0))),
        }
    return {"hartree": hartree, "series": series, "r": r}
