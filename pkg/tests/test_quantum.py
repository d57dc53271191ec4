import math

import numpy as np
import pytest

from meanfield import quantum as q
from meanfield.errors import DimensionMismatch, DomainError


@pytest.fixture(scope="module")
def grid64():
    return q.Grid1D(64)


@pytest.fixture(scope="module")
def grid32():
    return q.Grid1D(32)


def test_grid_validation():
    with pytest.raises(ValueError):
        q.Grid1D(48)
    with pytest.raises(ValueError):
        q.Grid1D(4)
    g = q.Grid1D(16, 4.0)
    assert g.h == 0.25
    assert len(g.k) == 16


@pytest.mark.parametrize(
    "potential",
    [q.cosine_potential(0.5), q.gaussian_well(1.0, 0.4), q.soft_coulomb(0.8, 0.2)],
    ids=["cosine", "well", "soft_coulomb"],
)
def test_potentials_even_real_bounded(potential, grid64):
    vals = potential.values(grid64)
    assert np.isrealobj(vals)
    assert np.all(np.isfinite(vals))
    assert potential.evenness_defect(grid64) <= 1e-12


def test_wavefunction_normalization_enforced(grid64):
    with pytest.raises(ValueError):
        q.WaveFunction(grid64, np.ones(64))


def test_plane_wave_free_evolution(grid64):
    psi = q.plane_wave(grid64, 1)
    free = q.PotentialSpec("cosine", amplitude=0.0)
    traj = q.solve_hartree(psi, free, 1.0, 1e-3, record_every=10**9)
    k = 2.0 * math.pi / grid64.length
    exact = psi.amplitudes * np.exp(-0.5j * k * k)
    assert np.max(np.abs(traj.states[-1] - exact)) < 1e-12


def test_hartree_mass_conserved(grid64):
    traj = q.solve_hartree(
        q.gaussian_packet(grid64), q.cosine_potential(0.5), 1.0, 1e-3, record_every=50
    )
    assert np.max(np.abs(traj.norms - 1.0)) <= 1e-12


def test_hartree_energy_drift_and_order(grid64):
    psi = q.gaussian_packet(grid64, width=0.7)
    pot = q.cosine_potential(0.5)

    def drift(dt):
        traj = q.solve_hartree(psi, pot, 1.0, dt, record_every=100)
        e = traj.energies
        return float(np.max(np.abs(e - e[0])) / abs(e[0]))

    d1 = drift(1e-3)
    d2 = drift(5e-4)
    assert d1 <= 1e-6
    assert 3.0 <= d1 / d2 <= 6.0


def test_hartree_dt_guard(grid64):
    psi = q.gaussian_packet(grid64)
    with pytest.raises(DomainError):
        q.solve_hartree(psi, q.cosine_potential(0.1), 1.0, 1.0)


# ---------------------------------------------------------------------------
# N-body solver


def test_free_factorized_stays_factorized(grid32):
    psi = q.gaussian_packet(grid32, width=0.7)
    free = q.PotentialSpec("cosine", amplitude=0.0)
    n = 3
    traj = q.solve_nbody_schrodinger(
        q.tensor_power(psi, n), free, 0.5, 1e-3, record_every=10**9
    )
    hartree = q.solve_hartree(psi, free, 0.5, 1e-3, record_every=10**9)
    target = q.tensor_power(q.WaveFunction(grid32, hartree.states[-1]), n)
    fidelity = abs(
        grid32.h**n
        * np.vdot(target.amplitudes, traj.snapshot(len(traj.times) - 1).amplitudes)
    )
    assert abs(fidelity - 1.0) <= 1e-10


def test_nbody_norm_every_step(grid32):
    psi = q.tensor_power(q.gaussian_packet(grid32, width=0.7), 2)
    traj = q.solve_nbody_schrodinger(psi, q.cosine_potential(0.5), 1.0, 1e-3)
    assert np.max(np.abs(traj.norm_history - 1.0)) <= 1e-12


def test_nbody_symmetry_preserved(grid32):
    psi = q.tensor_power(q.gaussian_packet(grid32, width=0.7), 2)
    traj = q.solve_nbody_schrodinger(
        psi, q.cosine_potential(0.5), 1.0, 1e-3, record_every=200
    )
    for i in range(len(traj.times)):
        assert traj.snapshot(i).symmetry_defect() <= 1e-10


def test_nbody_splitting_second_order(grid32):
    psi0 = q.tensor_power(q.gaussian_packet(grid32, width=0.7), 2)
    pot = q.cosine_potential(0.5)
    ends = {}
    for dt in (2e-3, 1e-3, 5e-4):
        traj = q.solve_nbody_schrodinger(psi0, pot, 0.5, dt, record_every=10**9)
        ends[dt] = traj.snapshot(len(traj.times) - 1).amplitudes
    e1 = np.linalg.norm(ends[2e-3] - ends[1e-3])
    e2 = np.linalg.norm(ends[1e-3] - ends[5e-4])
    assert 3.0 <= e1 / e2 <= 6.0


def test_memory_guard():
    grid = q.Grid1D(64)
    with pytest.raises(MemoryError):
        q.TensorWaveFunction(grid, 5, np.zeros((64,) * 5))


# ---------------------------------------------------------------------------
# density matrices


def test_reduced_density_of_product_state(grid32):
    psi = q.gaussian_packet(grid32, width=0.7)
    phi = q.plane_wave(grid32, 2)
    amp = np.multiply.outer(psi.amplitudes, phi.amplitudes)
    pair = q.TensorWaveFunction(grid32, 2, amp / q.grid_norm(grid32, amp))
    d1 = q.reduced_density(pair, 1)
    expect = q.pure_state_density(psi)
    assert np.max(np.abs(d1.matrix - expect.matrix)) <= 1e-10


def test_reduced_density_invariants(grid32):
    psi = q.tensor_power(q.gaussian_packet(grid32, width=0.7), 3)
    traj = q.solve_nbody_schrodinger(
        psi, q.cosine_potential(0.5), 0.4, 1e-3, record_every=10**9
    )
    snap = traj.snapshot(len(traj.times) - 1)
    d1 = q.reduced_density(snap, 1)
    assert d1.hermiticity_defect() <= 1e-10
    assert d1.min_eigenvalue() >= -1e-10
    assert abs(d1.trace() - 1.0) <= 1e-8
    d2 = q.reduced_density(snap, 2)
    assert abs(d2.trace() - 1.0) <= 1e-8
    nested = q.partial_trace(d2, grid32)
    assert np.max(np.abs(nested.matrix - d1.matrix)) * grid32.h <= 1e-9


def test_reduced_density_rejects_bad_order(grid32):
    psi = q.tensor_power(q.gaussian_packet(grid32), 2)
    with pytest.raises(ValueError):
        q.reduced_density(psi, 2)
    with pytest.raises(ValueError):
        q.reduced_density(psi, 0)


def test_trace_norm_examples(grid32):
    psi = q.gaussian_packet(grid32, width=0.7)
    proj = q.pure_state_density(psi)
    assert abs(q.trace_norm(proj) - 1.0) <= 1e-12

    diag = q.DensityMatrix(np.diag([0.5, -0.5]), 1.0)
    assert q.trace_norm(diag) == 1.0

    with pytest.raises(ValueError):
        q.trace_norm(q.DensityMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0))


def test_trace_norm_of_projector_difference(grid32):
    psi = q.gaussian_packet(grid32, width=0.5)
    phi = q.gaussian_packet(grid32, width=0.9, momentum=2.0)
    overlap = grid32.h * np.vdot(psi.amplitudes, phi.amplitudes)
    expect = 2.0 * math.sqrt(1.0 - abs(overlap) ** 2)
    got = q.trace_norm(q.subtract(q.pure_state_density(psi), q.pure_state_density(phi)))
    assert abs(got - expect) <= 1e-10


# ---------------------------------------------------------------------------
# convergence functional


def test_functional_zero_for_matching_state(grid32):
    psi = q.gaussian_packet(grid32, width=0.7)
    assert q.pickl_functional(q.pure_state_density(psi), psi) <= 1e-12


def test_functional_one_for_orthogonal_state(grid32):
    psi = q.plane_wave(grid32, 0)
    phi = q.plane_wave(grid32, 3)
    assert abs(q.pickl_functional(q.pure_state_density(phi), psi) - 1.0) <= 1e-12


def test_functional_half_for_even_mixture(grid32):
    psi = q.plane_wave(grid32, 0)
    phi = q.plane_wave(grid32, 3)
    mixed = q.DensityMatrix(
        0.5 * q.pure_state_density(psi).matrix + 0.5 * q.pure_state_density(phi).matrix,
        grid32.h,
    )
    assert abs(q.pickl_functional(mixed, psi) - 0.5) <= 1e-12


def test_functional_dimension_check(grid32, grid64):
    psi32 = q.gaussian_packet(grid32)
    psi64 = q.gaussian_packet(grid64)
    with pytest.raises(DimensionMismatch):
        q.pickl_functional(q.pure_state_density(psi32), psi64)


def test_bound_zero_cases(grid64):
    psi = q.gaussian_packet(grid64, width=0.7)
    free = q.PotentialSpec("cosine", amplitude=0.0)
    traj = q.solve_hartree(psi, free, 1.0, 1e-3, record_every=100)
    bound = q.pickl_bound(traj, free, 2)
    assert np.all(bound == 0.0)
    assert bound[0] == 0.0   # t = 0 gives an empty integral for any V
    traj_v = q.solve_hartree(psi, q.cosine_potential(0.5), 0.5, 1e-3, record_every=100)
    assert q.pickl_bound(traj_v, q.cosine_potential(0.5), 2)[0] == 0.0


def test_envelope_bounds_functional(grid64):
    res = q.hartree_limit_experiment(
        q.gaussian_packet(grid64, width=0.7), q.cosine_potential(0.5),
        [2], 0.5, 1e-3, record_every=100,
    )
    s = res["series"][2]
    assert np.all(s["e_n"] <= s["bound"] + 1e-12)
    assert np.all(s["trace_dist"] >= s["e_n"] - 1e-10)
    assert s["e_n"][0] <= 1e-10   # factorized initial data


def test_free_evolution_keeps_functional_zero(grid32):
    free = q.PotentialSpec("cosine", amplitude=0.0)
    res = q.hartree_limit_experiment(
        q.gaussian_packet(grid32, width=0.7), free, [2], 0.5, 1e-3, record_every=100
    )
    assert np.all(res["series"][2]["e_n"] <= 1e-10)


def test_functional_decreases_with_n(grid32):
    res = q.hartree_limit_experiment(
        q.gaussian_packet(grid32, width=0.7), q.cosine_potential(0.5),
        [2, 3], 0.5, 1e-3, record_every=250,
    )
    assert res["series"][3]["e_n"][-1] < res["series"][2]["e_n"][-1]


def test_bbgky_residual_small_and_shrinking(grid32):
    pot = q.cosine_potential(0.5)
    psi = q.gaussian_packet(grid32, width=0.7)

    def residual(dt):
        traj = q.solve_nbody_schrodinger(
            q.tensor_power(psi, 2), pot, 0.2, dt, record_every=1
        )
        return q.bbgky_first_marginal_residual(traj, pot, len(traj.times) // 2)

    r1 = residual(1e-3)
    r2 = residual(5e-4)
    assert r1 <= 1e-3
    assert r2 < r1


def test_bbgky_residual_three_particles(grid32):
    pot = q.cosine_potential(0.5)
    psi = q.gaussian_packet(grid32, width=0.7)
    traj = q.solve_nbody_schrodinger(
        q.tensor_power(psi, 3), pot, 0.05, 1e-3, record_every=1
    )
    res = q.bbgky_first_marginal_residual(traj, pot, len(traj.times) // 2)
    assert res <= 1e-3


def test_bbgky_rejects_unsupported_n(grid32):
    pot = q.cosine_potential(0.5)
    psi = q.tensor_power(q.gaussian_packet(grid32, width=0.7), 4)
    traj = q.solve_nbody_schrodinger(psi, pot, 0.002, 1e-3, record_every=1)
    with pytest.raises(ValueError):
        q.bbgky_first_marginal_residual(traj, pot, 1)
