"""Experiment orchestration: config validation, dispatch, persistence.

A run is described by a single JSON document

    {"experiment": "...", "master_seed": 123,
     "output_dir": "out", "parameters": {...}}

Every default is materialized into the manifest so a manifest alone can
replay the run.  CSV is the only tabular output: header row, '.'
decimal separator, '\\n' line endings, floats printed with 17
significant digits.  Outputs are written atomically and their SHA-256
digests recorded in manifest.json; reruns with the same seed are
byte-identical (manifests differ only in timestamps).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import chaos as chaos_mod
from . import dynamics, hierarchy, kernels, quantum
from .errors import ConfigError
from .rng import derive_seed
from .transport import mk_distance

SEED_ENV_VAR = "MEANFIELD_SEED"


# ---------------------------------------------------------------------------
# parameter schemas


@dataclass(frozen=True)
class Param:
    name: str
    kind: type
    default: object = None
    required: bool = False
    doc: str = ""


_KERNEL_DEFAULT = {"kind": "gaussian_odd", "dim": 2}
_DENSITY_1D = {"kind": "gaussian", "mean": [0.0], "cov_diag": [1.0]}
_DENSITY_2D = {"kind": "gaussian", "mean": [0.0, 0.0], "cov_diag": [1.0, 1.0]}

SCHEMAS: dict[str, list[Param]] = {
    "simulate": [
        Param("kernel", dict, _KERNEL_DEFAULT),
        Param("density", dict, _DENSITY_2D),
        Param("n", int, required=True),
        Param("t_final", float, 1.0),
        Param("dt", float, 1e-3),
        Param("record_every", int, 10),
    ],
    "wasserstein": [
        Param("density1", dict, _DENSITY_2D),
        Param("density2", dict, _DENSITY_2D),
        Param("n1", int, required=True),
        Param("n2", int, 0, doc="0 means n1"),
        Param("r", int, 1),
    ],
    "dobrushin": [
        Param("kernel", dict, _KERNEL_DEFAULT),
        Param("density1", dict, _DENSITY_2D),
        Param("density2", dict, _DENSITY_2D),
        Param("n", int, required=True),
        Param("t_final", float, 1.0),
        Param("n_pairs", int, 100),
        Param("dt", float, 5e-3),
    ],
    "rate": [
        Param("kernel", dict, {"kind": "gaussian_odd", "dim": 1}),
        Param("density", dict, _DENSITY_1D),
        Param("n_list", list, [32, 64, 128, 256]),
        Param("t_final", float, 1.0),
        Param("n_reps", int, 50),
        Param("reference_n", int, 0, doc="0 means 8 * max(n_list)"),
        Param("dt", float, 1e-2),
    ],
    "hk": [
        Param("density", dict, _DENSITY_1D),
        Param("n_list", list, [64, 128, 256, 512]),
        Param("n_reps", int, 200),
        Param("control_factor", int, 16),
    ],
    "chaos": [
        Param("density", dict, _DENSITY_1D),
        Param("n", int, 100),
        Param("n_runs", int, 1000),
        Param("phi", str, "coordinate_0"),
        Param("eps", float, 0.5),
        Param("tensor_order", int, 2),
        Param("tensor_n", int, 10),
        Param("tensor_runs", int, 200),
    ],
    "vortex": [
        Param("kind", str, "vortex_blob"),
        Param("eps", float, 0.1),
        Param("n", int, required=True),
        Param("density", dict, _DENSITY_2D),
        Param("t_final", float, 10.0),
        Param("dt", float, 1e-3),
        Param("record_every", int, 100),
    ],
    "hierarchy": [
        Param("x_in", float, required=True),
        Param("truncation", int, 10),
        Param("closure", str, "factorized"),
        Param("t_final", float, 1.0),
        Param("dt", float, 1e-3),
    ],
    "quantum": [
        Param("m", int, 64),
        Param("potential", dict, {"kind": "cosine", "a": 0.5}),
        Param("psi_width", float, 0.7),
        Param("n_list", list, [2, 3]),
        Param("t_final", float, 1.0),
        Param("dt", float, 1e-3),
        Param("r", float, 8.0),
        Param("record_every", int, 100),
    ],
}

OUTPUT_FILES = {
    "simulate": "trajectory.csv",
    "wasserstein": "wasserstein.csv",
    "dobrushin": "dobrushin.csv",
    "rate": "rate.csv",
    "hk": "hk.csv",
    "chaos": "chaos.csv",
    "vortex": "vortex.csv",
    "hierarchy": "hierarchy.csv",
    "quantum": "quantum.csv",
}


def format_float(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def resolve_config(raw: dict) -> dict:
    """Validate a raw config document and materialize every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown_top = set(raw) - {"experiment", "master_seed", "output_dir", "parameters"}
    if unknown_top:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown_top)}")
    experiment = raw.get("experiment")
    if experiment not in SCHEMAS:
        raise ConfigError(
            f"experiment must be one of {sorted(SCHEMAS)}, got {experiment!r}"
        )
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters must be an object")
    schema = {p.name: p for p in SCHEMAS[experiment]}
    unknown = set(params) - set(schema)
    if unknown:
        raise ConfigError(f"unknown parameters for {experiment}: {sorted(unknown)}")
    resolved = {}
    for name, spec in schema.items():
        if name in params:
            value = params[name]
            if spec.kind in (int, float) and isinstance(value, bool):
                raise ConfigError(f"parameter {name} must be {spec.kind.__name__}")
            if spec.kind is float and isinstance(value, int):
                value = float(value)
            if not isinstance(value, spec.kind):
                raise ConfigError(
                    f"parameter {name} must be {spec.kind.__name__}, "
                    f"got {type(value).__name__}"
                )
            resolved[name] = value
        elif spec.required:
            raise ConfigError(f"missing required parameter {name!r} for {experiment}")
        else:
            resolved[name] = spec.default
    seed = raw.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("master_seed must be an integer")
    out_dir = raw.get("output_dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir must be a string")
    return {
        "experiment": experiment,
        "master_seed": seed & ((1 << 64) - 1),
        "output_dir": out_dir,
        "parameters": resolved,
    }


def validate(raw: dict) -> dict:
    """Schema check plus resolved defaults; never touches the RNG."""
    resolved = resolve_config(raw)
    return {
        "experiment": resolved["experiment"],
        "resolved": resolved,
        "output_file": OUTPUT_FILES[resolved["experiment"]],
    }


# ---------------------------------------------------------------------------
# experiment runners: each returns (csv_header, rows, derived-metadata)


def _run_simulate(p: dict, seed: int, workers: int):
    spec = kernels.from_params(p["kernel"])
    density = chaos_mod.density_from_params(p["density"])
    cfg = dynamics.Configuration(density.sample(p["n"], derive_seed(seed, 0)))
    settings = dynamics.IntegratorSettings(dt=p["dt"], record_every=p["record_every"])
    traj = dynamics.simulate_nbody(spec, cfg, p["t_final"], settings)
    header = ["t", "particle"] + [f"x{a}" for a in range(traj.states.shape[2])]
    rows = list(dynamics.trajectory_rows(traj))
    return header, rows, {"n_steps_recorded": traj.n_times}


def _run_wasserstein(p: dict, seed: int, workers: int):
    d1 = chaos_mod.density_from_params(p["density1"])
    d2 = chaos_mod.density_from_params(p["density2"])
    n1 = p["n1"]
    n2 = p["n2"] or n1
    mu = dynamics.EmpiricalMeasure(d1.sample(n1, derive_seed(seed, 0)))
    nu = dynamics.EmpiricalMeasure(d2.sample(n2, derive_seed(seed, 1)))
    dist, plan = mk_distance(mu, nu, p["r"])
    rows = [(n1, n2, p["r"], dist, plan.marginal_defect(mu, nu))]
    return ["n1", "n2", "r", "distance", "marginal_defect"], rows, {}


def _run_dobrushin(p: dict, seed: int, workers: int):
    spec = kernels.from_params(p["kernel"])
    d1 = chaos_mod.density_from_params(p["density1"])
    d2 = chaos_mod.density_from_params(p["density2"])
    table = chaos_mod.dobrushin_experiment(
        spec, d1, d2, p["n"], p["t_final"], p["n_pairs"], seed,
        dt=p["dt"], workers=workers,
    )
    rows = [
        (r["pair"], r["w1_in"], r["w1_t"], r["bound"], r["passed"]) for r in table
    ]
    n_pass = sum(r["passed"] for r in table)
    return (
        ["pair", "w1_in", "w1_t", "bound", "passed"],
        rows,
        {"pass_rate": n_pass / len(table), "lipschitz_bound": spec.lipschitz_bound},
    )


def _run_rate(p: dict, seed: int, workers: int):
    spec = kernels.from_params(p["kernel"])
    density = chaos_mod.density_from_params(p["density"])
    reference_n = p["reference_n"] or 8 * max(int(v) for v in p["n_list"])
    res = chaos_mod.meanfield_rate_experiment(
        spec, density, p["n_list"], p["t_final"], p["n_reps"], reference_n,
        seed, dt=p["dt"], workers=workers,
    )
    rows = [(r["n"], r["rep"], r["w1"]) for r in res["rows"]]
    fit = res["fit"]
    return (
        ["n", "rep", "w1"],
        rows,
        {
            "reference_n": reference_n,
            "means": dict(zip([str(v) for v in fit.n_values], fit.stats)),
            "fit": {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "half_width": fit.half_width,
            },
        },
    )


def _run_hk(p: dict, seed: int, workers: int):
    density = chaos_mod.density_from_params(p["density"])
    res = chaos_mod.hk_rate_experiment(
        density, p["n_list"], p["n_reps"], seed,
        control_factor=p["control_factor"], workers=workers,
    )
    rows = [(r["n"], r["rep"], r["w2_squared"]) for r in res["rows"]]
    fit = res["fit"]
    return (
        ["n", "rep", "w2_squared"],
        rows,
        {
            "control_n": res["control_n"],
            "dim": density.dim,
            "reference_exponent": -2.0 / (density.dim + 4),
            "means": dict(zip([str(v) for v in fit.n_values], fit.stats)),
            "fit": {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "half_width": fit.half_width,
            },
        },
    )


_PHI_BY_NAME = {
    "coordinate_0": lambda: chaos_mod.Coordinate(0),
    "squared_norm": chaos_mod.SquaredNorm,
    "cosine_0": chaos_mod.BoundedCosine,
}


def _run_chaos(p: dict, seed: int, workers: int):
    density = chaos_mod.density_from_params(p["density"])
    if p["phi"] not in _PHI_BY_NAME:
        raise ConfigError(f"phi must be one of {sorted(_PHI_BY_NAME)}")
    phi = _PHI_BY_NAME[p["phi"]]()
    ensemble = chaos_mod.sample_ensemble(density, p["n"], p["n_runs"], seed)
    ref, ref_kind = chaos_mod.reference_mean(
        density, phi, seed=derive_seed(seed, 1 << 32)
    )
    fraction = chaos_mod.chaos_concentration(ensemble, phi, p["eps"], ref)
    rows = [("concentration_fraction", phi.name, fraction)]
    try:
        var = phi.var(density)
        rows.append(
            ("chebyshev_bound", phi.name, chaos_mod.chebyshev_bound(var, p["n"], p["eps"]))
        )
    except NotImplementedError:
        pass
    sm = chaos_mod.second_moment_identity(ensemble, phi)
    rows.append(("second_moment_lhs", phi.name, sm["lhs"]))
    rows.append(("second_moment_rhs", phi.name, sm["rhs"]))
    rows.append(("second_moment_defect", phi.name, sm["max_run_defect"]))
    small = chaos_mod.sample_ensemble(
        density, p["tensor_n"], p["tensor_runs"], derive_seed(seed, 1 << 33)
    )
    tm = chaos_mod.empirical_tensor_vs_marginal(small, phi, p["tensor_order"])
    for key in ("tensor", "marginal", "coefficient", "remainder_bound"):
        rows.append((f"tensor_{key}", phi.name, tm[key]))
    return (
        ["statistic", "phi", "value"],
        rows,
        {"reference_kind": ref_kind, "tensor_bounds_ok": tm["remainder_bound_ok"]},
    )


def _run_vortex(p: dict, seed: int, workers: int):
    if p["kind"] == "vortex_blob":
        spec = kernels.vortex_blob(p["eps"])
    elif p["kind"] == "vortex_point":
        spec = kernels.vortex_point()
    else:
        raise ConfigError("vortex kind must be vortex_blob or vortex_point")
    density = chaos_mod.density_from_params(p["density"])
    cfg = dynamics.Configuration(density.sample(p["n"], derive_seed(seed, 0)))
    settings = dynamics.IntegratorSettings(dt=p["dt"], record_every=p["record_every"])
    traj = dynamics.simulate_nbody(spec, cfg, p["t_final"], settings)
    rows = []
    for i in range(traj.n_times):
        q = kernels.conserved_quantities(spec, traj.states[i], traj.weights)
        rows.append(
            (
                float(traj.times[i]),
                q["hamiltonian"],
                q["center_0"],
                q["center_1"],
                q["moment"],
            )
        )
    return ["t", "hamiltonian", "center_0", "center_1", "moment"], rows, {}


def _run_hierarchy(p: dict, seed: int, workers: int):
    traj = hierarchy.solve_truncated(
        p["x_in"], p["truncation"], p["closure"], p["t_final"], p["dt"]
    )
    rows = []
    for i, t in enumerate(traj.times):
        for level in range(traj.truncation):
            rows.append((float(t), level + 1, float(traj.values[i, level])))
    profile = hierarchy.growth_profile(traj)
    return ["t", "k", "y"], rows, {"growth_radius": profile["radius"]}


def _run_quantum(p: dict, seed: int, workers: int):
    grid = quantum.Grid1D(p["m"])
    potential = quantum.potential_from_params(p["potential"])
    psi_in = quantum.gaussian_packet(grid, width=p["psi_width"])
    res = quantum.hartree_limit_experiment(
        psi_in, potential, p["n_list"], p["t_final"], p["dt"],
        record_every=p["record_every"], r=p["r"],
    )
    rows = []
    for n in sorted(res["series"]):
        s = res["series"][n]
        for i, t in enumerate(s["times"]):
            rows.append(
                (float(t), n, float(s["e_n"][i]), float(s["bound"][i]),
                 float(s["trace_dist"][i]))
            )
    drifts = {str(n): res["series"][n]["norm_drift"] for n in res["series"]}
    return (
        ["t", "n", "e_n", "bound", "trace_distance"],
        rows,
        {"r": p["r"], "grid_m": p["m"], "norm_drift": drifts},
    )


_RUNNERS = {
    "simulate": _run_simulate,
    "wasserstein": _run_wasserstein,
    "dobrushin": _run_dobrushin,
    "rate": _run_rate,
    "hk": _run_hk,
    "chaos": _run_chaos,
    "vortex": _run_vortex,
    "hierarchy": _run_hierarchy,
    "quantum": _run_quantum,
}


# ---------------------------------------------------------------------------
# persistence


def _write_atomic(path: str, data: bytes) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run(raw_config: dict, workers: int = 1, seed_override: int | None = None) -> dict:
    """Execute one experiment; returns the manifest written to disk."""
    resolved = resolve_config(raw_config)
    seed_source = "config"
    if seed_override is not None:
        resolved["master_seed"] = seed_override & ((1 << 64) - 1)
        seed_source = "override"
    elif os.environ.get(SEED_ENV_VAR):
        try:
            env_seed = int(os.environ[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
        resolved["master_seed"] = env_seed & ((1 << 64) - 1)
        seed_source = f"env:{SEED_ENV_VAR}"

    experiment = resolved["experiment"]
    started = time.time()
    header, rows, derived = _RUNNERS[experiment](
        resolved["parameters"], resolved["master_seed"], workers
    )
    finished = time.time()

    out_dir = resolved["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    csv_name = OUTPUT_FILES[experiment]
    csv_bytes = render_csv(header, rows)
    csv_path = os.path.join(out_dir, csv_name)
    _write_atomic(csv_path, csv_bytes)

    manifest = {
        "experiment": experiment,
        "config": resolved,
        "seed_source": seed_source,
        "tool_version": __version__,
        "started_at": started,
        "finished_at": finished,
        "wall_seconds": finished - started,
        "outputs": {csv_name: _sha256(csv_bytes)},
        "derived": _jsonable(derived),
        "workers": workers,
    }
    manifest_bytes = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    _write_atomic(os.path.join(out_dir, "manifest.json"), manifest_bytes)
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def verify_manifest(out_dir: str) -> bool:
    """Recompute output digests and compare with the stored manifest."""
    with open(os.path.join(out_dir, "manifest.json"), "rb") as handle:
        manifest = json.load(handle)
    for name, digest in manifest["outputs"].items():
        with open(os.path.join(out_dir, name), "rb") as handle:
            if _sha256(handle.read()) != digest:
                return False
    return True
