"""Sampling, propagation-of-chaos statistics and convergence-rate experiments.

Initial data are drawn i.i.d. from a density with all polynomial
moments finite (Gaussian, uniform box, Gaussian mixture).  Ensembles of
independent runs share a master seed; run k uses the derived seed
``derive_seed(master_seed, k)`` so any single run can be reproduced in
isolation.

The statistics implemented here are the empirical-measure identities
behind the chaos characterization (second-moment identity, tensor
power versus marginal with the injective-index counting) and the three
quantitative experiments: the W1 stability inequality with factor
exp(2L|t|), the mean-field convergence rate in N, and the sampling
rate of E[W2^2] against its N^(-2/(d+4)) upper bound.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dynamics import Configuration, EmpiricalMeasure, IntegratorSettings, simulate_nbody
from .errors import DimensionMismatch
from .kernels import KernelSpec
from .rng import Stream, derive_seed
from .transport import mk_distance


# ---------------------------------------------------------------------------
# densities and sampling


@dataclass(frozen=True)
class DensitySpec:
    """Sampling density with finite moments of every polynomial order."""

    kind: str
    dim: int
    mean: tuple = ()
    cov_diag: tuple = ()
    lo: tuple = ()
    hi: tuple = ()
    components: tuple = ()       # mixture: ((mean, cov_diag), ...)
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform_box", "gaussian_mixture"):
            raise ValueError(f"unknown density kind {self.kind!r}")

    def sample(self, n: int, seed: int) -> np.ndarray:
        """n i.i.d. points, deterministic in (self, n, seed)."""
        if n < 1:
            raise ValueError("n must be >= 1")
        stream = Stream(seed)
        d = self.dim
        if self.kind == "gaussian":
            z = stream.gaussians(n * d).reshape(n, d)
            return np.asarray(self.mean) + np.sqrt(np.asarray(self.cov_diag)) * z
        if self.kind == "uniform_box":
            lo = np.asarray(self.lo)
            hi = np.asarray(self.hi)
            return lo + (hi - lo) * stream.uniforms(n * d).reshape(n, d)
        # mixture: categorical indices from child stream 0, one shared
        # standard-normal block from child stream 1
        cat = stream.spawn(0).uniforms(n)
        z = stream.spawn(1).gaussians(n * d).reshape(n, d)
        edges = np.cumsum(np.asarray(self.weights))
        idx = np.searchsorted(edges, cat, side="right")
        idx = np.minimum(idx, len(self.components) - 1)
        means = np.asarray([c[0] for c in self.components])
        sds = np.sqrt(np.asarray([c[1] for c in self.components]))
        return means[idx] + sds[idx] * z


def gaussian(mean, cov_diag) -> DensitySpec:
    mean = tuple(float(v) for v in np.atleast_1d(mean))
    cov = tuple(float(v) for v in np.atleast_1d(cov_diag))
    if len(mean) != len(cov):
        raise DimensionMismatch("mean and covariance diagonal lengths differ")
    if any(c <= 0 for c in cov):
        raise ValueError("covariance entries must be positive")
    return DensitySpec("gaussian", len(mean), mean=mean, cov_diag=cov)


def uniform_box(lo, hi) -> DensitySpec:
    lo = tuple(float(v) for v in np.atleast_1d(lo))
    hi = tuple(float(v) for v in np.atleast_1d(hi))
    if len(lo) != len(hi):
        raise DimensionMismatch("box corners have different lengths")
    if any(h <= l for l, h in zip(lo, hi)):
        raise ValueError("box must have positive volume")
    return DensitySpec("uniform_box", len(lo), lo=lo, hi=hi)


def gaussian_mixture(components, weights) -> DensitySpec:
    comps = tuple(
        (tuple(float(v) for v in np.atleast_1d(m)),
         tuple(float(v) for v in np.atleast_1d(c)))
        for m, c in components
    )
    w = tuple(float(v) for v in weights)
    if abs(sum(w) - 1.0) > 1e-12:
        raise ValueError("mixture weights must sum to 1")
    if any(v < 0 for v in w):
        raise ValueError("mixture weights must be nonnegative")
    dim = len(comps[0][0])
    for m, c in comps:
        if len(m) != dim or len(c) != dim:
            raise DimensionMismatch("mixture components disagree on dimension")
        if any(x <= 0 for x in c):
            raise ValueError("covariance entries must be positive")
    return DensitySpec("gaussian_mixture", dim, components=comps, weights=w)


def density_from_params(params: dict) -> DensitySpec:
    kind = params.get("kind")
    if kind == "gaussian":
        return gaussian(params["mean"], params["cov_diag"])
    if kind == "uniform_box":
        return uniform_box(params["lo"], params["hi"])
    if kind == "gaussian_mixture":
        return gaussian_mixture(params["components"], params["weights"])
    raise ValueError(f"unknown density kind {kind!r}")


def sample_iid(density: DensitySpec, n: int, seed: int) -> Configuration:
    """Configuration of n i.i.d. samples with uniform weights."""
    return Configuration(density.sample(n, seed))


@dataclass
class Ensemble:
    """Independent runs sharing N, d and a master seed."""

    runs: list
    master_seed: int
    run_seeds: list = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def n(self) -> int:
        return self.runs[0].n


def sample_ensemble(
    density: DensitySpec, n: int, n_runs: int, master_seed: int
) -> Ensemble:
    seeds = [derive_seed(master_seed, k) for k in range(n_runs)]
    runs = [sample_iid(density, n, s) for s in seeds]
    return Ensemble(runs, master_seed, seeds)


# ---------------------------------------------------------------------------
# test functions with analytic moments


class TestFunction:
    """Callable on phase points, optionally with analytic moments."""

    name = "phi"

    def __call__(self, z):
        raise NotImplementedError

    def values(self, points: np.ndarray) -> np.ndarray:
        return np.asarray([self(z) for z in points], dtype=float)

    def mean(self, density: DensitySpec) -> float:
        raise NotImplementedError(f"no analytic mean for {self.name}")

    def var(self, density: DensitySpec) -> float:
        raise NotImplementedError(f"no analytic variance for {self.name}")


def _component_densities(density: DensitySpec):
    if density.kind == "gaussian_mixture":
        return [gaussian(m, c) for m, c in density.components], list(density.weights)
    return [density], [1.0]


class Coordinate(TestFunction):
    """phi(z) = z_k."""

    def __init__(self, k: int = 0):
        self.k = k
        self.name = f"coordinate_{k}"

    def __call__(self, z):
        return float(z[self.k])

    def values(self, points):
        return points[:, self.k].astype(float)

    def mean(self, density):
        comps, w = _component_densities(density)
        total = 0.0
        for c, wi in zip(comps, w):
            if c.kind == "gaussian":
                total += wi * c.mean[self.k]
            else:
                total += wi * 0.5 * (c.lo[self.k] + c.hi[self.k])
        return total

    def var(self, density):
        comps, w = _component_densities(density)
        m = self.mean(density)
        second = 0.0
        for c, wi in zip(comps, w):
            if c.kind == "gaussian":
                second += wi * (c.cov_diag[self.k] + c.mean[self.k] ** 2)
            else:
                lo, hi = c.lo[self.k], c.hi[self.k]
                second += wi * (lo * lo + lo * hi + hi * hi) / 3.0
        return second - m * m


class SquaredNorm(TestFunction):
    """phi(z) = |z|^2."""

    name = "squared_norm"

    def __call__(self, z):
        return float(np.dot(z, z))

    def values(self, points):
        return np.sum(points * points, axis=1)

    @staticmethod
    def _m2_m4_axis(c: DensitySpec, k: int):
        if c.kind == "gaussian":
            mu, s2 = c.mean[k], c.cov_diag[k]
            m2 = s2 + mu * mu
            m4 = mu**4 + 6 * mu * mu * s2 + 3 * s2 * s2
        else:
            lo, hi = c.lo[k], c.hi[k]
            m2 = (lo * lo + lo * hi + hi * hi) / 3.0
            m4 = (hi**5 - lo**5) / (5.0 * (hi - lo))
        return m2, m4

    def _component_mean_second(self, c: DensitySpec):
        m2s = []
        m4s = []
        for k in range(c.dim):
            m2, m4 = self._m2_m4_axis(c, k)
            m2s.append(m2)
            m4s.append(m4)
        mean = sum(m2s)
        # E[(sum z_k^2)^2] with independent axes
        second = sum(m4s) + sum(
            m2s[a] * m2s[b] for a in range(c.dim) for b in range(c.dim) if a != b
        )
        return mean, second

    def mean(self, density):
        comps, w = _component_densities(density)
        return sum(wi * self._component_mean_second(c)[0] for c, wi in zip(comps, w))

    def var(self, density):
        comps, w = _component_densities(density)
        mean = self.mean(density)
        second = sum(wi * self._component_mean_second(c)[1] for c, wi in zip(comps, w))
        return second - mean * mean


class BoundedCosine(TestFunction):
    """phi(z) = cos(z_0); bounded by 1, no analytic moments exposed."""

    name = "cosine_0"

    def __call__(self, z):
        return float(np.cos(z[0]))

    def values(self, points):
        return np.cos(points[:, 0])


def reference_mean(
    density: DensitySpec,
    phi: TestFunction,
    control_size: int = 100_000,
    seed: int = 0,
) -> tuple[float, str]:
    """<p, phi>: analytic when available, else a large control sample."""
    try:
        return phi.mean(density), "analytic"
    except NotImplementedError:
        pts = density.sample(control_size, seed)
        return float(np.mean(phi.values(pts))), f"control[{control_size}]"


# ---------------------------------------------------------------------------
# chaos statistics


def chaos_concentration(
    ensemble: Ensemble, phi: TestFunction, eps: float, ref_mean: float
) -> float:
    """Fraction of runs with |<mu_Z - p, phi>| >= eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    hits = 0
    for run in ensemble.runs:
        gap = abs(float(np.mean(phi.values(run.points))) - ref_mean)
        if gap >= eps:
            hits += 1
    return hits / ensemble.n_runs


def chebyshev_bound(var: float, n: int, eps: float) -> float:
    return min(1.0, var / (n * eps * eps))


def second_moment_identity(ensemble: Ensemble, phi: TestFunction) -> dict:
    """E<mu,phi>^2 against its single/pair marginal decomposition.

    Per run the identity
      <mu_Z, phi>^2 = (1/N) m(phi^2) + ((N-1)/N) m_2(phi x phi)
    is algebraically exact when the single and distinct-pair averages
    use the matching U-statistic normalizations; max_run_defect reports
    the worst floating-point deviation.
    """
    n = ensemble.n
    if n < 2:
        raise ValueError("pair term needs N >= 2")
    lhs_runs = []
    rhs_runs = []
    defect = 0.0
    for run in ensemble.runs:
        vals = phi.values(run.points)
        s = float(np.sum(vals))
        q = float(np.sum(vals * vals))
        lhs = (s / n) ** 2
        single = q / n
        pair = (s * s - q) / (n * (n - 1))
        rhs = single / n + (n - 1) / n * pair
        lhs_runs.append(lhs)
        rhs_runs.append(rhs)
        defect = max(defect, abs(lhs - rhs))
    return {
        "lhs": float(np.mean(lhs_runs)),
        "rhs": float(np.mean(rhs_runs)),
        "max_run_defect": defect,
    }


def injective_coefficient(n: int, j: int) -> Fraction:
    """N! / ((N-j)! N^j) as an exact rational."""
    num = 1
    for k in range(j):
        num *= n - k
    return Fraction(num, n**j)


def empirical_tensor_vs_marginal(
    ensemble: Ensemble, phi: TestFunction, j: int
) -> dict:
    """Tensor-power moment of mu_Z versus the distinct-index marginal.

    Enumerates all N^j index maps per run, splits the sum into its
    injective and non-injective parts, and checks the exact counting
    identity together with the remainder mass bound
    1 - N!/((N-j)! N^j) <= j(j-1)/(2N).
    """
    n = ensemble.n
    if j > n:
        raise ValueError("tensor order j must not exceed N")
    if j > 4 or n > 12:
        raise ValueError("exact enumeration limited to j <= 4, N <= 12")
    coeff = injective_coefficient(n, j)
    coeff_f = float(coeff)
    falling = math.prod(range(n, n - j, -1))
    tensor_runs = []
    marginal_runs = []
    decomposition_defect = 0.0
    remainder_ok = True
    remainder_bounds = []
    for run in ensemble.runs:
        vals = phi.values(run.points)
        total = 0.0
        injective = 0.0
        for s in itertools.product(range(n), repeat=j):
            prod = 1.0
            for idx in s:
                prod *= vals[idx]
            total += prod
            if len(set(s)) == j:
                injective += prod
        tensor = total / n**j
        marginal = injective / falling
        tensor_runs.append(tensor)
        marginal_runs.append(marginal)
        sup = float(np.max(np.abs(vals))) if len(vals) else 0.0
        bound = 2.0 * (1.0 - coeff_f) * sup**j
        remainder_bounds.append(bound)
        gap = abs(tensor - coeff_f * marginal)
        if gap > bound + 1e-12:
            remainder_ok = False
        decomposition_defect = max(
            decomposition_defect,
            abs(tensor - (coeff_f * marginal + (total - injective) / n**j)),
        )
    mass_gap_ok = (1 - coeff) <= Fraction(j * (j - 1), 2 * n)
    return {
        "tensor": float(np.mean(tensor_runs)),
        "marginal": float(np.mean(marginal_runs)),
        "coefficient": coeff_f,
        "coefficient_exact": coeff,
        "remainder_bound": float(np.mean(remainder_bounds)),
        "remainder_bound_ok": remainder_ok,
        "mass_gap_ok": bool(mass_gap_ok),
        "decomposition_defect": decomposition_defect,
    }


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class RateFit:
    """Log-log least squares fit of a statistic against sample size."""

    n_values: list
    stats: list
    slope: float
    intercept: float
    half_width: float

    @classmethod
    def fit(cls, n_values, stats) -> "RateFit":
        n_values = [int(v) for v in n_values]
        stats = [float(s) for s in stats]
        if len(n_values) < 3:
            raise ValueError("rate fit needs at least 3 sample sizes")
        if len(set(n_values)) != len(n_values):
            raise ValueError("sample sizes must be distinct")
        slope, intercept, half = loglog_fit(n_values, stats)
        return cls(n_values, stats, slope, intercept, half)


def loglog_fit(n_values, stats) -> tuple[float, float, float]:
    """OLS fit of ln(stat) on ln(N); returns slope, intercept, 2*SE(slope)."""
    x = np.log(np.asarray(n_values, dtype=float))
    y = np.log(np.asarray(stats, dtype=float))
    k = len(x)
    xbar = x.mean()
    ybar = y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    dof = max(k - 2, 1)
    se = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return slope, float(intercept), 2.0 * se


# ---------------------------------------------------------------------------
# experiments


def _ordered_map(fn, items, workers: int):
    """Map preserving item order; reductions stay deterministic."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def dobrushin_experiment(
    kernel: KernelSpec,
    density1: DensitySpec,
    density2: DensitySpec,
    n: int,
    t_final: float,
    n_pairs: int,
    master_seed: int,
    dt: float = 5e-3,
    tolerance: float = 1e-7,
    workers: int = 1,
) -> list[dict]:
    """W1 stability of the flow: W1(t) <= exp(2L|t|) W1(0) per sampled pair."""
    if not kernel.is_lipschitz or not math.isfinite(kernel.lipschitz_bound):
        raise ValueError("Dobrushin experiment needs a Lipschitz kernel with known L")
    settings = IntegratorSettings(dt=dt, substep_tolerance=tolerance, record_every=10**9)
    factor = math.exp(2.0 * kernel.lipschitz_bound * abs(t_final))

    def one_pair(pair: int) -> dict:
        seed_a = derive_seed(master_seed, 2 * pair)
        seed_b = derive_seed(master_seed, 2 * pair + 1)
        mu_a = EmpiricalMeasure(density1.sample(n, seed_a))
        mu_b = EmpiricalMeasure(density2.sample(n, seed_b))
        w1_in, _ = mk_distance(mu_a, mu_b, 1)
        traj_a = simulate_nbody(kernel, mu_a, t_final, settings)
        traj_b = simulate_nbody(kernel, mu_b, t_final, settings)
        w1_t, _ = mk_distance(
            traj_a.measure(traj_a.n_times - 1), traj_b.measure(traj_b.n_times - 1), 1
        )
        bound = factor * w1_in
        return {
            "pair": pair,
            "w1_in": w1_in,
            "w1_t": w1_t,
            "bound": bound,
            "passed": bool(w1_t <= bound * (1.0 + 1e-4) + 10.0 * tolerance),
        }

    return _ordered_map(one_pair, range(n_pairs), workers)


def meanfield_rate_experiment(
    kernel: KernelSpec,
    density: DensitySpec,
    n_list,
    t_final: float,
    n_reps: int,
    reference_n: int,
    master_seed: int,
    dt: float = 1e-2,
    workers: int = 1,
) -> dict:
    """Mean W1 against a high-resolution reference evolution, fitted in N.

    The reference is a single particle run with reference_n samples;
    the empirical measure being an exact weak solution makes particle
    count the principled refinement axis.
    """
    n_list = [int(v) for v in n_list]
    if reference_n <= max(n_list):
        raise ValueError("reference_n must exceed every tested N")
    settings = IntegratorSettings(dt=dt, record_every=10**9)
    ref_seed = derive_seed(master_seed, 0)
    mu_ref = EmpiricalMeasure(density.sample(reference_n, ref_seed))
    traj_ref = simulate_nbody(kernel, mu_ref, t_final, settings)
    ref_final = traj_ref.measure(traj_ref.n_times - 1)

    def one_rep(task):
        i_n, n, rep = task
        seed = derive_seed(master_seed, 1 + i_n * n_reps + rep)
        mu = EmpiricalMeasure(density.sample(n, seed))
        traj = simulate_nbody(kernel, mu, t_final, settings)
        w1, _ = mk_distance(traj.measure(traj.n_times - 1), ref_final, 1)
        return {"n": n, "rep": rep, "w1": w1}

    tasks = [
        (i_n, n, rep)
        for i_n, n in enumerate(n_list)
        for rep in range(n_reps)
    ]
    rows = _ordered_map(one_rep, tasks, workers)
    means = [
        float(np.mean([row["w1"] for row in rows if row["n"] == n])) for n in n_list
    ]
    fit = RateFit.fit(n_list, means)
    return {"rows": rows, "means": means, "fit": fit, "reference_n": reference_n}


def hk_rate_experiment(
    density: DensitySpec,
    n_list,
    n_reps: int,
    master_seed: int,
    control_factor: int = 16,
    workers: int = 1,
) -> dict:
    """Sampling rate of E[W2^2] against a large control cloud."""
    n_list = [int(v) for v in n_list]
    control_n = control_factor * max(n_list)
    control = EmpiricalMeasure(density.sample(control_n, derive_seed(master_seed, 0)))

    def one_rep(task):
        i_n, n, rep = task
        seed = derive_seed(master_seed, 1 + i_n * n_reps + rep)
        mu = EmpiricalMeasure(density.sample(n, seed))
        w2, _ = mk_distance(mu, control, 2)
        return {"n": n, "rep": rep, "w2_squared": w2 * w2}

    tasks = [
        (i_n, n, rep)
        for i_n, n in enumerate(n_list)
        for rep in range(n_reps)
    ]
    rows = _ordered_map(one_rep, tasks, workers)
    means = [
        float(np.mean([row["w2_squared"] for row in rows if row["n"] == n]))
        for n in n_list
    ]
    fit = RateFit.fit(n_list, means)
    return {"rows": rows, "means": means, "fit": fit, "control_n": control_n}
