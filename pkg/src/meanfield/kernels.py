"""Pairwise interaction kernels on phase space.

Every built-in kernel K(z, z') is skew-symmetric, K(z, z') = -K(z', z),
so it vanishes on the diagonal and pairwise actions balance exactly.
All kinds except the singular point-vortex kernel carry a finite
Lipschitz constant in each argument, declared on the spec and checkable
by sampling.

Kinds:
  gaussian_odd      (z - z') exp(-|z - z'|^2), any dimension, L = 1
  linear_rotation   J(z - z') in the plane, L = 1
  vortex_point      -(1/2pi) J(x - x') / |x - x'|^2, singular, L = inf
  vortex_blob       -(1/2pi) J(x - x') / (|x - x'|^2 + eps^2), L = 1/(2pi eps^2)
  vlasov_mollified  (v - v', c (x - x') / (|x - x'|^2 + eps^2)^(3/2)),
                    L = max(1, c / eps^3)

J is the rotation by -pi/2: J(a, b) = (b, -a).

Evaluation is pure and stateless; safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DomainError, UnsupportedKernelError
from .rng import Stream

KINDS = (
    "gaussian_odd",
    "linear_rotation",
    "vortex_point",
    "vortex_blob",
    "vlasov_mollified",
)

VORTEX_KINDS = ("vortex_point", "vortex_blob")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    dim: int
    eps: float = 0.0
    coupling: float = 1.0
    lipschitz_bound: float = field(default=math.inf)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def is_lipschitz(self) -> bool:
        return self.kind != "vortex_point"


def gaussian_odd(dim: int = 2) -> KernelSpec:
    return KernelSpec("gaussian_odd", dim, lipschitz_bound=1.0)


def linear_rotation() -> KernelSpec:
    return KernelSpec("linear_rotation", 2, lipschitz_bound=1.0)


def vortex_point() -> KernelSpec:
    return KernelSpec("vortex_point", 2, lipschitz_bound=math.inf)


def vortex_blob(eps: float) -> KernelSpec:
    if eps <= 0:
        raise ValueError("vortex_blob requires eps > 0")
    return KernelSpec(
        "vortex_blob", 2, eps=eps, lipschitz_bound=1.0 / (2.0 * math.pi * eps**2)
    )


def vlasov_mollified(eps: float, coupling: float = 1.0, space_dim: int = 3) -> KernelSpec:
    """Position/velocity kernel on R^(2m); mollified soft-Coulomb force."""
    if eps <= 0:
        raise ValueError("vlasov_mollified requires eps > 0")
    L = max(1.0, abs(coupling) / eps**3)
    return KernelSpec(
        "vlasov_mollified", 2 * space_dim, eps=eps, coupling=coupling,
        lipschitz_bound=L,
    )


def from_params(params: dict) -> KernelSpec:
    """Build a spec from a harness-config table, e.g. {"kind": "vortex_blob", "eps": 0.05}."""
    kind = params.get("kind")
    if kind == "gaussian_odd":
        return gaussian_odd(int(params.get("dim", 2)))
    if kind == "linear_rotation":
        return linear_rotation()
    if kind == "vortex_point":
        return vortex_point()
    if kind == "vortex_blob":
        return vortex_blob(float(params["eps"]))
    if kind == "vlasov_mollified":
        return vlasov_mollified(
            float(params["eps"]),
            float(params.get("c", 1.0)),
            int(params.get("space_dim", 3)),
        )
    raise ValueError(f"unknown kernel kind {kind!r}")


def _rotate_cw(u: np.ndarray) -> np.ndarray:
    """Apply J, rotation by -pi/2, along the last axis (length 2)."""
    out = np.empty_like(u)
    out[..., 0] = u[..., 1]
    out[..., 1] = -u[..., 0]
    return out


def apply_to_differences(spec: KernelSpec, u: np.ndarray) -> np.ndarray:
    """Evaluate K on difference vectors u = z - z', shape (..., dim).

    For vortex_point the value at u = 0 is returned as 0; callers that
    must reject coincident points do so separately (see evaluate).
    """
    if u.shape[-1] != spec.dim:
        raise DimensionMismatch(
            f"difference vectors have dim {u.shape[-1]}, kernel dim {spec.dim}"
        )
    kind = spec.kind
    if kind == "gaussian_odd":
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        return u * np.exp(-r2)
    if kind == "linear_rotation":
        return _rotate_cw(u)
    if kind == "vortex_point":
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        safe = np.where(r2 > 0.0, r2, 1.0)
        val = -_rotate_cw(u) / (2.0 * math.pi * safe)
        return np.where(r2 > 0.0, val, 0.0)
    if kind == "vortex_blob":
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        return -_rotate_cw(u) / (2.0 * math.pi * (r2 + spec.eps**2))
    if kind == "vlasov_mollified":
        m = spec.dim // 2
        dx = u[..., :m]
        dv = u[..., m:]
        r2 = np.sum(dx * dx, axis=-1, keepdims=True)
        force = spec.coupling * dx / (r2 + spec.eps**2) ** 1.5
        return np.concatenate([dv, force], axis=-1)
    raise UnsupportedKernelError(kind)


def evaluate(spec: KernelSpec, z: np.ndarray, zp: np.ndarray) -> np.ndarray:
    """K(z, z') for a single pair of phase points."""
    z = np.asarray(z, dtype=float)
    zp = np.asarray(zp, dtype=float)
    if z.shape != (spec.dim,) or zp.shape != (spec.dim,):
        raise DimensionMismatch(
            f"points of shape {z.shape}, {zp.shape} for kernel dim {spec.dim}"
        )
    if spec.kind == "vortex_point" and np.array_equal(z, zp):
        raise DomainError("vortex_point kernel is singular at z = z'")
    return apply_to_differences(spec, z - zp)


def weighted_field(
    spec: KernelSpec,
    targets: np.ndarray,
    sources: np.ndarray,
    weights: np.ndarray,
    exclude_self: bool = False,
    chunk: int = 256,
) -> np.ndarray:
    """Sum_j w_j K(target_i, source_j) for each target.

    The j-sum is evaluated with numpy's deterministic reduction for a
    fixed shape, so results do not depend on any thread schedule.  With
    exclude_self=True targets and sources must be the same array and
    the i = j term is dropped (required for vortex_point; a no-op for
    Lipschitz kinds since K vanishes on the diagonal).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    n = targets.shape[0]
    out = np.empty_like(targets)
    w = np.asarray(weights, dtype=float)[None, :, None]
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        diff = targets[lo:hi, None, :] - sources[None, :, :]
        vals = apply_to_differences(spec, diff) * w
        if exclude_self:
            idx = np.arange(lo, hi)
            vals[np.arange(hi - lo), idx, :] = 0.0
        out[lo:hi] = vals.sum(axis=1)
    return out


def _sample_box(stream: Stream, n: int, dim: int, box: tuple[float, float]) -> np.ndarray:
    lo, hi = box
    return lo + (hi - lo) * stream.uniforms(n * dim).reshape(n, dim)


def verify_skew(
    spec: KernelSpec,
    n_samples: int,
    seed: int,
    box: tuple[float, float] = (-5.0, 5.0),
    kernel_fn=None,
) -> dict:
    """Max sampled violation of K(z, z') = -K(z', z).

    kernel_fn overrides the built-in formula (used to exhibit broken
    kernels in tests); it must map difference arrays like
    apply_to_differences.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    stream = Stream(seed)
    z = _sample_box(stream, n_samples, spec.dim, box)
    zp = _sample_box(stream, n_samples, spec.dim, box)
    fn = kernel_fn if kernel_fn is not None else (
        lambda a, b: apply_to_differences(spec, a - b)
    )
    viol = np.linalg.norm(fn(z, zp) + fn(zp, z), axis=-1)
    worst = int(np.argmax(viol))
    return {
        "max_violation": float(viol[worst]),
        "worst_pair": (z[worst].copy(), zp[worst].copy()),
        "n_samples": n_samples,
    }


def estimate_lipschitz(
    spec: KernelSpec,
    n_samples: int,
    seed: int,
    box: tuple[float, float] = (-5.0, 5.0),
) -> float:
    """Max sampled difference quotient of K in either argument.

    Sampling-based: any run returns a lower bound on the true constant,
    which by (HK2) never exceeds the declared lipschitz_bound.
    """
    if spec.kind == "vortex_point":
        raise UnsupportedKernelError(
            "vortex_point has unbounded derivatives near the diagonal"
        )
    stream = Stream(seed)
    z1 = _sample_box(stream, n_samples, spec.dim, box)
    z2 = _sample_box(stream, n_samples, spec.dim, box)
    zp = _sample_box(stream, n_samples, spec.dim, box)
    sep = np.linalg.norm(z1 - z2, axis=-1)
    ok = sep > 1e-12
    d_first = np.linalg.norm(
        apply_to_differences(spec, z1 - zp) - apply_to_differences(spec, z2 - zp),
        axis=-1,
    )
    # By skew-symmetry the second-argument quotient equals the first's
    # with roles swapped, so one family of triples covers both.
    d_second = np.linalg.norm(
        apply_to_differences(spec, zp - z1) - apply_to_differences(spec, zp - z2),
        axis=-1,
    )
    quot = np.maximum(d_first[ok], d_second[ok]) / sep[ok]
    return float(np.max(quot))


def conserved_quantities(
    spec: KernelSpec, points: np.ndarray, weights: np.ndarray
) -> dict:
    """Diagnostic invariants of the N-body flow for this kernel.

    Always reports the weighted mean.  Vortex kinds add the interaction
    Hamiltonian, the center of vorticity and the moment of inertia;
    all three are exactly conserved by the vortex dynamics.
    """
    points = np.atleast_2d(points)
    if points.shape[1] != spec.dim:
        raise DimensionMismatch(
            f"configuration dim {points.shape[1]} != kernel dim {spec.dim}"
        )
    w = np.asarray(weights, dtype=float)
    out = {}
    mean = (w[:, None] * points).sum(axis=0) / w.sum()
    for a, val in enumerate(mean):
        out[f"mean_{a}"] = float(val)
    if spec.kind in VORTEX_KINDS:
        diff = points[:, None, :] - points[None, :, :]
        r2 = np.sum(diff * diff, axis=-1)
        iu, ju = np.triu_indices(len(points), k=1)
        if spec.kind == "vortex_point":
            if np.any(r2[iu, ju] <= 0.0):
                raise DomainError("coincident vortex centers in Hamiltonian")
            logs = np.log(r2[iu, ju]) / 2.0
        else:
            logs = np.log(r2[iu, ju] + spec.eps**2) / 2.0
        out["hamiltonian"] = float(
            -(w[iu] * w[ju] * logs).sum() / (4.0 * math.pi)
        )
        center = (w[:, None] * points).sum(axis=0)
        for a, val in enumerate(center):
            out[f"center_{a}"] = float(val)
        out["moment"] = float((w * np.sum(points * points, axis=1)).sum())
    return out
