"""Truncated Riccati moment hierarchy dy_k/dt = k y_{k+1}.

The infinite hierarchy has the factorized solutions y_k(t) = x(t)^k
with x(t) = x_in / (1 - t x_in), which blow up at t = 1/x_in.  The
truncated solver closes level K either with zero (polynomial solution,
truncation error (t x_in)^K scale) or with the factorized closure
y_{K+1} := y_1^{K+1}, which keeps the factorized solution exact up to
integrator error.

The growth profile R = max_k (max_t |y_k|)^(1/k) is the observable
behind the exponential-growth uniqueness condition: hierarchies with a
finite R stay inside the uniqueness class.

The classical smooth non-analytic counterexample (derivatives of
exp(-1/t)) is documented here rather than simulated: all its
derivatives vanish at t = 0, so no floating-point trajectory can
distinguish it from zero at reachable resolutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, DomainError

OVERFLOW_GUARD = 1e300

CLOSURES = ("zero", "factorized")


@dataclass
class HierarchyTrajectory:
    times: np.ndarray
    values: np.ndarray        # (n_times, K)
    closure: str
    x_in: float

    @property
    def truncation(self) -> int:
        return self.values.shape[1]

    def final(self) -> np.ndarray:
        return self.values[-1].copy()


def riccati_reference(x_in: float, t: float, levels: int) -> np.ndarray:
    """Closed-form y_k(t) = (x_in / (1 - t x_in))^k for k = 1..levels."""
    if t * x_in >= 1.0:
        raise DomainError(f"t*x_in = {t * x_in:.6g} is past the blow-up time")
    x = x_in / (1.0 - t * x_in)
    return x ** np.arange(1, levels + 1, dtype=float)


def _rhs(y: np.ndarray, closure: str) -> np.ndarray:
    k = y.shape[0]
    out = np.empty_like(y)
    ladder = np.arange(1, k, dtype=float)
    out[:-1] = ladder * y[1:]
    if closure == "zero":
        out[-1] = 0.0
    else:
        out[-1] = k * y[0] ** (k + 1)
    return out


def solve_truncated(
    x_in: float,
    truncation: int,
    closure: str,
    t_final: float,
    dt: float,
) -> HierarchyTrajectory:
    """RK4 on the K-level hierarchy with the chosen closure."""
    if truncation < 1:
        raise ValueError("truncation level must be >= 1")
    if closure not in CLOSURES:
        raise ValueError(f"closure must be one of {CLOSURES}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = x_in ** np.arange(1, truncation + 1, dtype=float)
    times = [0.0]
    values = [y.copy()]
    if t_final != 0.0:
        n_steps = max(1, math.ceil(abs(t_final) / dt - 1e-12))
        h = t_final / n_steps
        # overflow is the blow-up signal here, not an anomaly
        with np.errstate(over="ignore", invalid="ignore"):
            for step in range(1, n_steps + 1):
                k1 = _rhs(y, closure)
                k2 = _rhs(y + 0.5 * h * k1, closure)
                k3 = _rhs(y + 0.5 * h * k2, closure)
                k4 = _rhs(y + h * k3, closure)
                y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > OVERFLOW_GUARD:
                    raise BlowUpError(
                        f"hierarchy blew up at t={step * h:.6g} (x_in={x_in})"
                    )
                times.append(step * h)
                values.append(y.copy())
    return HierarchyTrajectory(np.asarray(times), np.asarray(values), closure, x_in)


def growth_profile(trajectory: HierarchyTrajectory) -> dict:
    """Per-level sup |y_k| and the smallest R with sup_t |y_k| <= R^k."""
    if trajectory.values.size == 0:
        raise ValueError("empty trajectory")
    sup = np.max(np.abs(trajectory.values), axis=0)
    ks = np.arange(1, trajectory.truncation + 1, dtype=float)
    radii = sup ** (1.0 / ks)
    return {
        "per_level_max": sup,
        "radius": float(np.max(radii)),
    }
