"""Acceptance criteria A1-A11, one printed pass/fail line per criterion.

Run with `pytest -s tests/test_acceptance.py` to see the lines as they
complete; tolerances are pinned here and nowhere else.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from meanfield import chaos
from meanfield import dynamics as dyn
from meanfield import harness
from meanfield import hierarchy as hy
from meanfield import kernels as K
from meanfield import quantum as q
from meanfield import transport as tr
from meanfield.rng import Stream

SEED = 20260810


def report(name: str, ok: bool, detail: str = ""):
    print(f"{name} {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------


def test_a1_ot_oracle_equivalence():
    start = time.monotonic()
    stream = Stream(SEED)
    worst = 0.0
    for trial in range(100):
        n = 1 + trial % 7
        d = 1 + trial % 2
        pts = stream.uniforms(2 * n * d).reshape(2, n, d) * 4.0 - 2.0
        mu = dyn.EmpiricalMeasure(pts[0])
        nu = dyn.EmpiricalMeasure(pts[1])
        dist, _ = tr.mk_distance(mu, nu, 1)
        worst = max(worst, abs(dist - tr.brute_force_w1(mu, nu)))
    elapsed = time.monotonic() - start
    report(
        "A1", worst <= 1e-12 and elapsed < 10.0,
        f"max |mk - brute| = {worst:.2e}, {elapsed:.1f}s",
    )


def test_a2_dobrushin_inequality():
    start = time.monotonic()
    density = chaos.gaussian([0.0, 0.0], [1.0, 1.0])
    shifted = chaos.gaussian([0.5, -0.25], [1.2, 0.8])
    rows = chaos.dobrushin_experiment(
        K.gaussian_odd(2), density, shifted, n=64, t_final=1.0,
        n_pairs=100, master_seed=SEED, dt=5e-3,
    )
    elapsed = time.monotonic() - start
    n_pass = sum(r["passed"] for r in rows)
    report(
        "A2", n_pass == 100 and elapsed < 120.0,
        f"{n_pass}/100 pairs within exp(2t) envelope, {elapsed:.1f}s",
    )


@pytest.fixture(scope="module")
def picard_instance():
    pts = chaos.gaussian([0.0, 0.0], [1.0, 1.0]).sample(16, SEED)
    mu = dyn.EmpiricalMeasure(pts)
    flow = dyn.characteristic_flow_picard(
        K.gaussian_odd(2), mu, pts, 1.0, quadrature_dt=5e-4
    )
    traj = dyn.simulate_nbody(
        K.gaussian_odd(2), mu, 1.0, dyn.IntegratorSettings(dt=1e-3, record_every=10**9)
    )
    return flow, traj


def test_a3_flow_identification(picard_instance):
    flow, traj = picard_instance
    sup = float(np.max(np.abs(flow.at_final() - traj.final().points)))
    report("A3", sup <= 1e-6, f"sup |Z_picard - Z_nbody| = {sup:.2e}")


def test_a4_picard_factorial_decay(picard_instance):
    flow, _ = picard_instance
    c = (2.0 + flow.c1) * 1.0 * 1.0
    devs = flow.deviations
    ok = True
    checked = 0
    for n in range(5, len(devs) - 1):
        if devs[n] <= 1e-12:
            break
        checked += 1
        if devs[n + 1] / devs[n] > c / n * 1.1:
            ok = False
    report("A4", ok and checked > 0, f"{checked} ratios below (2+C1)Lt/n * 1.1")


def test_a5_meanfield_rate():
    res = chaos.meanfield_rate_experiment(
        K.gaussian_odd(1), chaos.gaussian([0.0], [1.0]),
        [32, 64, 128, 256], 1.0, n_reps=50, reference_n=2048,
        master_seed=SEED, dt=1e-2,
    )
    means = res["means"]
    slope = res["fit"].slope
    decreasing = all(a > b for a, b in zip(means, means[1:]))
    report(
        "A5", decreasing and slope <= -0.2,
        f"means {['%.4f' % m for m in means]}, slope {slope:.3f}",
    )


def test_a6_horowitz_karandikar_rate():
    start = time.monotonic()
    res = chaos.hk_rate_experiment(
        chaos.gaussian([0.0], [1.0]), [64, 128, 256, 512],
        n_reps=200, master_seed=SEED,
    )
    elapsed = time.monotonic() - start
    slope = res["fit"].slope
    report(
        "A6", slope <= -2.0 / 5.0 + 0.1 and elapsed < 300.0,
        f"E[W2^2] slope {slope:.3f} <= -0.3, {elapsed:.1f}s",
    )


def test_a7_chaos_statistics():
    density_phi_pairs = [
        (chaos.gaussian([0.0], [1.0]), chaos.Coordinate(0)),
        (chaos.gaussian([0.0], [1.0]), chaos.SquaredNorm()),
        (chaos.uniform_box([-1.0], [1.0]), chaos.Coordinate(0)),
        (chaos.uniform_box([-1.0], [1.0]), chaos.SquaredNorm()),
        (
            chaos.gaussian_mixture([([-1.0], [0.4]), ([1.5], [0.8])], [0.5, 0.5]),
            chaos.Coordinate(0),
        ),
    ]
    # (a) second-moment identity exact per run
    identity_defect = 0.0
    for density, phi in density_phi_pairs:
        ens = chaos.sample_ensemble(density, 64, 200, SEED + 1)
        out = chaos.second_moment_identity(ens, phi)
        identity_defect = max(identity_defect, out["max_run_defect"])
    identity_ok = identity_defect <= 1e-12

    # (b) Chebyshev bound + 3 sigma for every built-in pair
    cheb_ok = True
    for density, phi in density_phi_pairs:
        n, runs, eps = 100, 400, 0.5
        ens = chaos.sample_ensemble(density, n, runs, SEED + 2)
        bound = chaos.chebyshev_bound(phi.var(density), n, eps)
        frac = chaos.chaos_concentration(ens, phi, eps, phi.mean(density))
        se = math.sqrt(max(bound * (1.0 - bound), 1e-12) / runs)
        if frac > bound + 3.0 * se + 1e-12:
            cheb_ok = False

    # (c) remainder mass bound as exact arithmetic, N <= 1e4, j <= 4
    arith_ok = True
    for n in range(2, 10_001):
        for j in range(2, 5):
            if j > n:
                continue
            if 1 - chaos.injective_coefficient(n, j) > Fraction(j * (j - 1), 2 * n):
                arith_ok = False
                break
        if not arith_ok:
            break

    # (d) remainder bound on data
    ens = chaos.sample_ensemble(chaos.uniform_box([-1.0], [1.0]), 10, 100, SEED + 3)
    data_ok = all(
        chaos.empirical_tensor_vs_marginal(ens, chaos.BoundedCosine(), j)[
            "remainder_bound_ok"
        ]
        for j in (2, 3, 4)
    )
    report(
        "A7", identity_ok and cheb_ok and arith_ok and data_ok,
        f"identity defect {identity_defect:.1e}; chebyshev {cheb_ok}; "
        f"arithmetic {arith_ok}; data bound {data_ok}",
    )


def test_a8_vortex_dynamics():
    # two point vortices: fixed separation over t = 10
    cfg = dyn.Configuration(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 1.0]))
    traj = dyn.simulate_nbody(
        K.vortex_point(), cfg, 10.0,
        dyn.IntegratorSettings(dt=1e-3, record_every=100), normalize=False,
    )
    sep_err = max(
        abs(np.linalg.norm(traj.states[i, 0] - traj.states[i, 1]) - 2.0)
        for i in range(traj.n_times)
    )

    # 20 blob vortices: invariants drift <= 1e-6 relative over t = 10
    spec = K.vortex_blob(0.1)
    pts = chaos.gaussian([0.0, 0.0], [1.0, 1.0]).sample(20, SEED)
    w = np.full(20, 1.0 / 20)
    btraj = dyn.simulate_nbody(
        spec, dyn.Configuration(pts, w), 10.0,
        dyn.IntegratorSettings(dt=1e-3, record_every=1000), normalize=False,
    )
    q0 = K.conserved_quantities(spec, btraj.states[0], w)
    drift = 0.0
    for i in range(btraj.n_times):
        qi = K.conserved_quantities(spec, btraj.states[i], w)
        for key in ("hamiltonian", "center_0", "center_1", "moment"):
            drift = max(drift, abs(qi[key] - q0[key]) / max(1.0, abs(q0[key])))

    # RK4 order ratio in [12, 20]
    pts8 = chaos.gaussian([0.0, 0.0], [1.0, 1.0]).sample(8, SEED + 7)

    def endpoint(dt):
        t = dyn.simulate_nbody(
            K.gaussian_odd(2), dyn.Configuration(pts8), 1.0,
            dyn.IntegratorSettings(dt=dt, record_every=10**9),
        )
        return t.final().points

    ref = endpoint(0.0125)
    ratio = np.linalg.norm(endpoint(0.1) - ref) / np.linalg.norm(endpoint(0.05) - ref)
    ok = sep_err <= 1e-6 and drift <= 1e-6 and 12.0 <= ratio <= 20.0
    report(
        "A8", ok,
        f"separation err {sep_err:.1e}, invariant drift {drift:.1e}, rk4 ratio {ratio:.1f}",
    )


def test_a9_riccati_hierarchy():
    traj = hy.solve_truncated(0.5, 10, "factorized", 1.0, 1e-3)
    y1_err = abs(traj.final()[0] - 1.0)

    errors = []
    for levels in (5, 10, 20, 40):
        t = hy.solve_truncated(0.5, levels, "zero", 1.0, 2.5e-4)
        errors.append(abs(t.final()[0] - 1.0))
    monotone = all(a > b for a, b in zip(errors, errors[1:]))

    radius = hy.growth_profile(traj)["radius"]
    radius_err = abs(radius - 1.0)   # x(t_max) = x(1) = 1 for x_in = 0.5
    ok = y1_err <= 1e-6 and monotone and radius_err <= 1e-6
    report(
        "A9", ok,
        f"y1 err {y1_err:.1e}; zero-closure errors {['%.1e' % e for e in errors]}; "
        f"radius err {radius_err:.1e}",
    )


def test_a10_quantum_suite():
    start = time.monotonic()
    checks = []

    grid64 = q.Grid1D(64)
    grid32 = q.Grid1D(32)
    pot = q.cosine_potential(0.5)
    psi64 = q.gaussian_packet(grid64, width=0.7)
    psi32 = q.gaussian_packet(grid32, width=0.7)

    # Hartree mass at every step, energy drift + order-2 ratio
    hart = q.solve_hartree(psi64, pot, 1.0, 1e-3, record_every=1)
    mass_drift = float(np.max(np.abs(hart.norms - 1.0)))
    checks.append(("hartree mass 1e-12", mass_drift <= 1e-12))
    e = hart.energies
    drift1 = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    hart2 = q.solve_hartree(psi64, pot, 1.0, 5e-4, record_every=2)
    e2 = hart2.energies
    drift2 = float(np.max(np.abs(e2 - e2[0])) / abs(e2[0]))
    checks.append(("energy drift 1e-6", drift1 <= 1e-6))
    checks.append(("energy order-2 ratio in [3,6]", 3.0 <= drift1 / drift2 <= 6.0))

    # N-body unitarity at every step (N=2, M=32)
    traj2 = q.solve_nbody_schrodinger(
        q.tensor_power(psi32, 2), pot, 1.0, 1e-3, record_every=1000
    )
    checks.append(
        ("unitarity 1e-12", float(np.max(np.abs(traj2.norm_history - 1.0))) <= 1e-12)
    )

    # reduced density invariants + nesting (N=3, M=32)
    traj3 = q.solve_nbody_schrodinger(
        q.tensor_power(psi32, 3), pot, 0.4, 1e-3, record_every=10**9
    )
    snap = traj3.snapshot(len(traj3.times) - 1)
    d1 = q.reduced_density(snap, 1)
    d2 = q.reduced_density(snap, 2)
    nested = q.partial_trace(d2, grid32)
    nest_defect = float(np.max(np.abs(nested.matrix - d1.matrix))) * grid32.h
    checks.append(("reduced hermitian 1e-10", d1.hermiticity_defect() <= 1e-10))
    checks.append(("reduced PSD -1e-10", d1.min_eigenvalue() >= -1e-10))
    checks.append(("reduced trace 1e-8", abs(d1.trace() - 1.0) <= 1e-8))
    checks.append(("nesting 1e-9", nest_defect <= 1e-9))

    # Pickl functional and envelope, cosine potential, N in {2,3}, M=64
    res64 = q.hartree_limit_experiment(psi64, pot, [2, 3], 1.0, 1e-3, record_every=100)
    env_ok = True
    e0_ok = True
    for n, s in res64["series"].items():
        env_ok = env_ok and bool(np.all(s["e_n"] <= s["bound"] + 1e-12))
        e0_ok = e0_ok and s["e_n"][0] <= 1e-10
        checks.append(
            (f"trace distance >= E_{n}", bool(np.all(s["trace_dist"] >= s["e_n"] - 1e-10)))
        )
    checks.append(("E_N(0) = 0 (factorized)", e0_ok))
    checks.append(("E_N <= envelope (M=64, N=2,3)", env_ok))

    # 1/N scaling window at M=32, N in {2,3,4}
    res32 = q.hartree_limit_experiment(psi32, pot, [2, 3, 4], 1.0, 1e-3, record_every=250)
    scaled = [n * res32["series"][n]["e_n"][-1] for n in (2, 3, 4)]
    checks.append(("N*E_N(1) within factor 3", max(scaled) / min(scaled) <= 3.0))

    # BBGKY k=1 residual at dt = 1e-3, shrinking with dt
    def residual(dt):
        t = q.solve_nbody_schrodinger(
            q.tensor_power(psi32, 2), pot, 0.2, dt, record_every=1
        )
        return q.bbgky_first_marginal_residual(t, pot, len(t.times) // 2)

    r1 = residual(1e-3)
    r2 = residual(5e-4)
    checks.append(("bbgky residual 1e-3", r1 <= 1e-3))
    checks.append(("bbgky residual shrinks", r2 < r1))

    elapsed = time.monotonic() - start
    checks.append(("runtime < 10 min", elapsed < 600.0))
    failed = [name for name, ok in checks if not ok]
    report(
        "A10", not failed,
        f"{len(checks)} checks, {elapsed:.0f}s"
        + (f"; failed: {failed}" if failed else ""),
    )


def test_a11_reproducibility(tmp_path):
    configs = [
        {
            "experiment": "dobrushin",
            "master_seed": SEED,
            "parameters": {"n": 16, "n_pairs": 5, "t_final": 0.5, "dt": 1e-2},
        },
        {
            "experiment": "hk",
            "master_seed": SEED,
            "parameters": {"n_list": [16, 32, 64], "n_reps": 10},
        },
        {
            "experiment": "quantum",
            "master_seed": SEED,
            "parameters": {"m": 32, "n_list": [2], "t_final": 0.2, "record_every": 50},
        },
    ]
    ok = True
    for i, cfg in enumerate(configs):
        payloads = []
        for run_idx in range(2):
            out = tmp_path / f"{cfg['experiment']}_{run_idx}"
            harness.run(dict(cfg, output_dir=str(out)))
            csv_name = harness.OUTPUT_FILES[cfg["experiment"]]
            payloads.append((out / csv_name).read_bytes())
            if not harness.verify_manifest(str(out)):
                ok = False
        if payloads[0] != payloads[1]:
            ok = False
    report("A11", ok, "byte-identical CSVs and verified digests for 3 experiments")
