"""Render convergence figures from meanfield-lab CSV outputs.

Four figure kinds, keyed to the documented CSV schemas:

  rate          n,rep,<stat>            log-log means with fitted slope
  envelope      dobrushin or quantum    data against its inequality bound
  invariants    vortex invariants       relative drift over time
  trajectories  particle trajectories   paths in the plane or x(t)

Slopes shown on rate figures are re-fitted from the CSV with the same
least-squares formula the harness uses, then compared against the
manifest; a disagreement beyond 1e-9 is rendered as a warning band
rather than hidden.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SLOPE_AGREEMENT = 1e-9

KINDS = ("rate", "envelope", "invariants", "trajectories")


class RenderError(Exception):
    """Input cannot be rendered."""


class MissingColumnError(RenderError):
    def __init__(self, column: str, path: str):
        self.column = column
        super().__init__(f"column {column!r} missing from {path}")


class EmptyInputError(RenderError):
    def __init__(self, path: str):
        super().__init__(f"no data rows in {path}")


@dataclass
class FigureSpec:
    inputs: list
    kind: str
    output: str
    manifest: str | None = None
    title: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise RenderError("at least one input CSV is required")
        for path in self.inputs:
            if not os.path.exists(path):
                raise RenderError(f"input file not found: {path}")


def read_csv(path: str) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines:
        raise EmptyInputError(path)
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    if not rows:
        raise EmptyInputError(path)
    columns = {}
    for j, name in enumerate(header):
        columns[name] = np.asarray([float(row[j]) for row in rows])
    return columns


def require(columns: dict, names, path: str) -> None:
    for name in names:
        if name not in columns:
            raise MissingColumnError(name, path)


def loglog_fit(n_values, stats):
    """Same OLS formula as the harness; must agree with its manifests."""
    x = np.log(np.asarray(n_values, dtype=float))
    y = np.log(np.asarray(stats, dtype=float))
    xbar = x.mean()
    ybar = y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = ybar - slope * xbar
    return slope, float(intercept)


def _load_manifest(spec: FigureSpec):
    path = spec.manifest
    if path is None:
        candidate = os.path.join(os.path.dirname(spec.inputs[0]) or ".", "manifest.json")
        path = candidate if os.path.exists(candidate) else None
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _rate_means(columns: dict, path: str):
    require(columns, ("n", "rep"), path)
    stat_names = [c for c in columns if c not in ("n", "rep")]
    if not stat_names:
        raise MissingColumnError("<statistic>", path)
    stat = stat_names[0]
    n_col = columns["n"].astype(int)
    order = []
    for v in n_col:
        if v not in order:
            order.append(int(v))
    means = [float(np.mean(columns[stat][n_col == v])) for v in order]
    return order, means, stat


def _render_rate(spec: FigureSpec, ax) -> dict:
    manifest = _load_manifest(spec)
    info = {"curves": []}
    warned = False
    for path in spec.inputs:
        columns = read_csv(path)
        n_values, means, stat = _rate_means(columns, path)
        slope, intercept = loglog_fit(n_values, means)
        label = f"{stat}: slope {slope:.3f}"
        ax.loglog(n_values, means, "o", ms=5)
        grid = np.asarray(n_values, dtype=float)
        ax.loglog(grid, np.exp(intercept) * grid**slope, "-", label=label)
        entry = {"path": path, "slope": slope, "n": n_values, "means": means}
        if manifest is not None and "fit" in manifest.get("derived", {}):
            manifest_slope = manifest["derived"]["fit"]["slope"]
            entry["manifest_slope"] = manifest_slope
            entry["agrees"] = abs(slope - manifest_slope) <= SLOPE_AGREEMENT
            if not entry["agrees"]:
                warned = True
        info["curves"].append(entry)
    if manifest is not None:
        ref = manifest.get("derived", {}).get("reference_exponent")
        if ref is not None:
            grid = np.asarray(info["curves"][0]["n"], dtype=float)
            anchor = info["curves"][0]["means"][0]
            ax.loglog(
                grid, anchor * (grid / grid[0]) ** ref, "--", color="gray",
                label=f"reference exponent {ref:.3f}",
            )
    if warned:
        ax.axhspan(*ax.get_ylim(), color="red", alpha=0.15)
        ax.set_title("WARNING: fit disagrees with manifest")
    ax.set_xlabel("N")
    ax.set_ylabel("statistic")
    ax.legend()
    info["warned"] = warned
    return info


def _render_envelope(spec: FigureSpec, ax) -> dict:
    path = spec.inputs[0]
    columns = read_csv(path)
    if "w1_in" in columns:
        require(columns, ("w1_in", "w1_t", "bound"), path)
        x = columns["w1_in"]
        ax.plot(x, columns["w1_t"], "o", ms=4, label="W1(t)")
        positive = x > 0
        factor = float(np.median(columns["bound"][positive] / x[positive]))
        grid = np.linspace(0.0, float(x.max()) * 1.05, 50)
        ax.plot(grid, factor * grid, "-", label=f"exp(2Lt) envelope ({factor:.2f}x)")
        ax.set_xlabel("W1 at t = 0")
        ax.set_ylabel("W1 at t")
        violations = int(np.sum(columns["w1_t"] > columns["bound"] * (1 + 1e-4) + 1e-6))
        info = {"mode": "stability", "factor": factor, "violations": violations}
    elif "e_n" in columns:
        require(columns, ("t", "n", "e_n", "bound"), path)
        info = {"mode": "functional", "n_values": []}
        for n in sorted(set(columns["n"].astype(int))):
            sel = columns["n"].astype(int) == n
            (line,) = ax.plot(columns["t"][sel], columns["e_n"][sel], "-o", ms=3,
                              label=f"E_N, N={n}")
            ax.plot(columns["t"][sel], columns["bound"][sel], "--",
                    color=line.get_color(), label=f"envelope, N={n}")
            info["n_values"].append(int(n))
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("convergence functional")
    else:
        raise MissingColumnError("w1_in or e_n", path)
    ax.legend()
    return info


def _render_invariants(spec: FigureSpec, ax) -> dict:
    path = spec.inputs[0]
    columns = read_csv(path)
    require(columns, ("t",), path)
    series = [c for c in columns if c != "t"]
    if not series:
        raise MissingColumnError("<invariant>", path)
    t = columns["t"]
    floor = 1e-18
    worst = {}
    for name in series:
        vals = columns[name]
        drift = np.abs(vals - vals[0]) / max(1.0, abs(vals[0]))
        worst[name] = float(drift.max())
        ax.semilogy(t, np.maximum(drift, floor), label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("relative drift")
    ax.legend()
    return {"series": series, "max_drift": worst}


def _render_trajectories(spec: FigureSpec, ax) -> dict:
    path = spec.inputs[0]
    columns = read_csv(path)
    require(columns, ("t", "particle", "x0"), path)
    particles = columns["particle"].astype(int)
    dims = [c for c in columns if c.startswith("x")]
    for p in sorted(set(particles)):
        sel = particles == p
        if "x1" in columns:
            ax.plot(columns["x0"][sel], columns["x1"][sel], "-", lw=0.8)
        else:
            ax.plot(columns["t"][sel], columns["x0"][sel], "-", lw=0.8)
    if "x1" in columns:
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
        ax.set_aspect("equal", adjustable="datalim")
    else:
        ax.set_xlabel("t")
        ax.set_ylabel("x0")
    return {"n_particles": len(set(particles)), "dim": len(dims)}


_RENDERERS = {
    "rate": _render_rate,
    "envelope": _render_envelope,
    "invariants": _render_invariants,
    "trajectories": _render_trajectories,
}


def _save(fig, output: str) -> None:
    ext = os.path.splitext(output)[1].lower()
    if ext == ".svg":
        metadata = {"Date": None}
    else:
        metadata = {"Software": "meanfield-plots"}
    fig.savefig(output, dpi=150, metadata=metadata)


def render(spec: FigureSpec) -> dict:
    """Render one figure; raises before creating the file on bad input."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    try:
        info = _RENDERERS[spec.kind](spec, ax)
        if spec.title and not (spec.kind == "rate" and info.get("warned")):
            ax.set_title(spec.title)
        if "xlabel" in spec.options:
            ax.set_xlabel(spec.options["xlabel"])
        if "ylabel" in spec.options:
            ax.set_ylabel(spec.options["ylabel"])
        fig.tight_layout()
        _save(fig, spec.output)
    finally:
        plt.close(fig)
    info["output"] = spec.output
    return info
