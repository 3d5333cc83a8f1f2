import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from apkinetic.collision import (DEALIAS_RATIO, DEFAULT_B0, CollisionBackend, calibrate_b0, choose_mu,
                                 penalized_split, precompute_kernel, q_bgk, q_boltzmann, q_boltzmann_values)
from apkinetic.errors import GridError
from apkinetic.limits import bkw, bkw_dt, moment_values
from apkinetic.velocity import GridFunction, Moments, VelocityGrid2D, l1_distance, l1_norm, maxwellian, moments

V_MAX = 3 * math.pi


def reference_B(grid, b0, l, m):
    """B(l, m) with exact Bessel functions and adaptive radial quadrature."""
    xi = math.pi / grid.v_max
    R = 2 * DEALIAS_RATIO * grid.v_max
    a = 0.5 * xi * math.hypot(l[0] + m[0], l[1] + m[1])
    b = 0.5 * xi * math.hypot(l[0] - m[0], l[1] - m[1])
    val, _ = integrate.quad(lambda r: r * special.j0(a * r) * special.j0(b * r), 0, R, limit=400,
                            epsabs=1e-10, epsrel=1e-10)
    return b0 * (2 * math.pi) ** 2 * val


@pytest.fixture(scope="module")
def table8():
    return precompute_kernel(VelocityGrid2D(8, V_MAX))


def test_table_shape_and_radii(table8):
    assert table8.beta.shape == (7, 7, 7, 7)
    assert table8.support_radius == pytest.approx(2 / (3 + math.sqrt(2)) * V_MAX)
    assert table8.n_angle >= 32 and table8.n_radial >= 64
    assert np.all(np.isfinite(table8.beta))


def test_odd_or_non_power_of_two_rejected():
    with pytest.raises(GridError):
        precompute_kernel(VelocityGrid2D(12, V_MAX))
    with pytest.raises(GridError):
        VelocityGrid2D(9, V_MAX)


def test_kernel_symmetry_on_random_pairs(table32):
    rng = np.random.default_rng(7)
    h = table32.half
    for _ in range(100):
        l, m = rng.integers(-h, h + 1, size=(2, 2))
        assert table32.value(l, m) == table32.value(m, l)


def test_mass_mode_weights_vanish(table32):
    # beta(l, -l): gain and loss integrands coincide, so the k = 0 mode is identically zero
    h = table32.half
    for l1 in range(-h, h + 1):
        for l2 in range(-h, h + 1):
            assert table32.value((l1, l2), (-l1, -l2)) == 0.0


def test_refinement_oracle_n8(table8):
    grid = table8.grid
    fine = precompute_kernel(grid, n_angle=4 * table8.n_angle, n_radial=4 * table8.n_radial, cache_dir="")
    assert np.abs(fine.beta - table8.beta).max() <= 1e-6


def test_independent_bessel_oracle_n8(table8):
    grid, b0 = table8.grid, table8.b0
    rng = np.random.default_rng(3)
    h = table8.half
    for _ in range(12):
        l, m = (tuple(int(x) for x in rng.integers(-h, h + 1, 2)) for _ in range(2))
        ref = reference_B(grid, b0, l, m) - 0.5 * (reference_B(grid, b0, l, l) + reference_B(grid, b0, m, m))
        assert table8.value(l, m) == pytest.approx(ref, abs=1e-6)


def test_cache_hit_is_bit_identical(tmp_path):
    grid = VelocityGrid2D(16, V_MAX)
    fresh = precompute_kernel(grid, cache_dir="")
    first = precompute_kernel(grid, cache_dir=tmp_path)
    files = list(tmp_path.glob("kernel_*.bin"))
    assert len(files) == 1 and files[0].read_bytes()[:4] == b"APKT"
    second = precompute_kernel(grid, cache_dir=tmp_path)
    assert fresh.beta.tobytes() == first.beta.tobytes() == second.beta.tobytes()


def test_cache_ignores_corrupt_file(tmp_path):
    grid = VelocityGrid2D(8, V_MAX)
    t = precompute_kernel(grid, cache_dir=tmp_path)
    path = next(tmp_path.glob("kernel_*.bin"))
    path.write_bytes(b"garbage")
    assert np.array_equal(precompute_kernel(grid, cache_dir=tmp_path).beta, t.beta)


def test_cache_key_separates_parameters():
    grid = VelocityGrid2D(8, V_MAX)
    a = precompute_kernel(grid, cache_dir="")
    b = precompute_kernel(grid, b0=2 * DEFAULT_B0, cache_dir="")
    assert a.cache_key() != b.cache_key()
    # Q is linear in b0
    assert np.allclose(b.beta, 2 * a.beta, rtol=1e-13, atol=1e-15)


def test_q_of_maxwellian_small(grid32, table32):
    M = maxwellian(Moments.from_primitive(1.0, (0.0, 0.0), 1.0), grid32)
    assert l1_norm(q_boltzmann(M, table32)) <= 1e-5


@functools.cache
def _table16():
    return precompute_kernel(VelocityGrid2D(16, V_MAX))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_mass_of_q_vanishes_for_random_f(seed):
    table = _table16()
    f = np.random.default_rng(seed).uniform(0, 1, size=(16, 16))
    assert abs(moment_values(q_boltzmann_values(f, table), table.grid)[0]) <= 1e-12


def test_q_matches_bkw_derivative_n32(grid32, table32):
    err = l1_distance(q_boltzmann(bkw(grid32, 1.0), table32), bkw_dt(grid32, 1.0))
    assert err <= 5e-3, f"N_v=32: L1(Q(BKW(1)) - dBKW/dt) = {err:.3e}"


def test_q_matches_bkw_derivative_n64(grid64, table64):
    assert l1_distance(q_boltzmann(bkw(grid64, 1.0), table64), bkw_dt(grid64, 1.0)) <= 1e-8


def test_q_momentum_energy_n32(grid32, table32):
    m = moment_values(q_boltzmann_values(bkw(grid32, 0.0).values, table32), grid32)
    assert np.abs(m[1:]).max() <= 1e-6, f"N_v=32 momentum/energy of Q: {m[1:]}"


def test_q_momentum_energy_n64(grid64, table64):
    m = moment_values(q_boltzmann_values(bkw(grid64, 0.0).values, table64), grid64)
    assert np.abs(m[1:]).max() <= 1e-9


def _mirror(a):
    # v -> -v maps node j to n - j; node 0 (v = -v_max) has no partner
    return a[1:, 1:][::-1, ::-1]


def test_even_input_gives_even_output(grid32, table32):
    vx, vy = grid32.mesh
    f = np.exp(-(vx**2) / 1.5 - vy**2 / 0.8) * (1 + 0.2 * vx**2 * vy**2 / 10)
    Q = q_boltzmann_values(f, table32)
    assert np.abs(Q[1:, 1:] - _mirror(Q)).max() <= 1e-12
    assert np.abs(Q[1:, :] - Q[1:, :][::-1, :]).max() <= 1e-12


def test_q_grid_mismatch(table32):
    with pytest.raises(GridError):
        q_boltzmann(bkw(VelocityGrid2D(16, V_MAX), 0.0), table32)


def test_q_batched_matches_single(grid16):
    table = precompute_kernel(grid16)
    stack = np.stack([bkw(grid16, t).values for t in (0.0, 1.0, 3.0)])
    batched = q_boltzmann_values(stack, table)
    for i in range(3):
        assert np.allclose(batched[i], q_boltzmann_values(stack[i], table), rtol=0, atol=1e-15)


# -- BGK, mu policy, split ---------------------------------------------------

def test_q_bgk_properties(grid32):
    M = maxwellian(Moments.from_primitive(1.0, (0.3, 0.0), 0.8), grid32)
    assert np.abs(q_bgk(M, 1.0).values).max() <= 1e-14
    f = bkw(grid32, 0.0)
    assert np.abs(moment_values(q_bgk(f, 1.3).values, grid32)).max() <= 1e-8
    assert np.allclose(q_bgk(f, 2.6).values, 2 * q_bgk(f, 1.3).values, rtol=1e-15, atol=0)


@pytest.mark.parametrize("rho,kappa,expected", [(1.0, 1.0, 1.0), (2.0, 1.5, 3.0)])
def test_choose_mu(grid32, rho, kappa, expected):
    f = maxwellian(Moments.from_primitive(rho, (0, 0), 1.0), grid32)
    assert choose_mu(f, CollisionBackend.bgk(kappa, b_tot=1.0)) == pytest.approx(expected, rel=1e-10)


def test_boltzmann_b_tot_and_mu(boltz32):
    assert boltz32.b_tot == pytest.approx(2 * math.pi * DEFAULT_B0)
    assert boltz32.mu_for_density(2.0) == pytest.approx(2 * boltz32.b_tot)


def test_kappa_below_one_rejected():
    with pytest.raises(ValueError):
        CollisionBackend.bgk(0.5)


def test_gain_term_nonnegative_at_bkw0(grid32, boltz32):
    split = penalized_split(bkw(grid32, 0.0), boltz32)
    assert split.P.min >= -1e-6, f"N_v=32: min P = {split.P.min:.3e}"


def test_gain_term_nonnegative_at_bkw0_n64(grid64, boltz64):
    assert penalized_split(bkw(grid64, 0.0), boltz64).P.min >= -1e-10


def test_bgk_split_has_zero_deviation(grid32):
    f = bkw(grid32, 0.2)
    split = penalized_split(f, CollisionBackend.bgk())
    assert np.array_equal(split.g.values, np.zeros_like(f.values))


@pytest.mark.parametrize("backend_name", ["boltz64", "bgk", "bgk_kappa"])
def test_split_invariants(request, backend_name):
    backend = {"bgk": CollisionBackend.bgk(), "bgk_kappa": CollisionBackend.bgk(2.0)}.get(backend_name)
    backend = backend or request.getfixturevalue(backend_name)
    grid = backend.table.grid if backend.table else VelocityGrid2D(32, V_MAX)
    grid32 = grid
    f = bkw(grid, 0.5)
    s = penalized_split(f, backend)
    recon = GridFunction(grid32, s.mu * s.g.values + s.mu * (s.M.values - f.values))
    assert l1_distance(recon, s.Q) <= 1e-12
    assert np.abs(moment_values(s.g.values, grid32)).max() <= 1e-8
    U_p = moment_values(s.P.values, grid32) / s.mu
    assert np.allclose(U_p, moment_values(f.values, grid32), atol=1e-8)


def test_split_moments_of_g_n32_boltzmann(grid32, boltz32):
    s = penalized_split(bkw(grid32, 0.5), boltz32)
    m = moment_values(s.g.values, grid32)
    assert np.abs(m).max() <= 1e-8, f"N_v=32 moments of g: {m}"


# -- calibration -------------------------------------------------------------

def test_calibration_is_scale_invariant():
    # Q is linear in b0: doubling b0 and halving time reproduces the same RK4 iterates
    grid = VelocityGrid2D(32, V_MAX)
    a = calibrate_b0(grid, b0_trial=0.1, t_fit=1.0, dt=0.02)
    b = calibrate_b0(grid, b0_trial=0.2, t_fit=0.5, dt=0.01)
    assert a == pytest.approx(b, rel=1e-10)


@pytest.mark.slow
def test_calibration_reproduces_default_b0(grid64):
    assert calibrate_b0(grid64) == pytest.approx(DEFAULT_B0, rel=1e-8)
    assert DEFAULT_B0 == pytest.approx(1 / (2 * math.pi), rel=1e-12)
