import math

import numpy as np
import pytest

from vlaser.floquet import (
    FloquetDensity,
    FloquetField,
    avg_intensity,
    build_block_liouvillian,
    field_update,
    lasing_branches,
    residual_F,
    solve_selfconsistent,
    steady_kernel,
    truncation_check,
)
from vlaser.model import build_atomic_liouvillian, default_params, gain_down, gain_up
from vlaser.stability import DegenerateKernelError, solve_nonlasing, stability

STRONG_PUMP = dict(delta_p=10.0, omega_p=15.0)
# Ring radius and frequency at the strong-pump point, pinned from the first converged run.
STRONG_PUMP_ALPHA1 = 118.08324157979693
STRONG_PUMP_OMEGA = 205.45900626665636


@pytest.fixture(scope="module")
def strong_pump():
    p = default_params(**STRONG_PUMP)
    return p, solve_selfconsistent(p)


def nb(k):
    return slice(9 * k, 9 * (k + 1))


def test_block_structure_without_sidebands():
    p = default_params()
    f = FloquetField.three(0, 1.5 - 2j, 0, 200.0)
    big = build_block_liouvillian(f, p)
    assert big.shape == (27, 27)
    assert np.all(big[nb(0), nb(1)] == 0) and np.all(big[nb(1), nb(2)] == 0)
    assert np.all(big[nb(1), nb(0)] == 0) and np.all(big[nb(2), nb(1)] == 0)
    L0 = build_atomic_liouvillian(p) + gain_up(1.5 - 2j, p) + gain_down(1.5 + 2j, p)
    assert np.allclose(big[nb(0), nb(0)], -1j * 200.0 * np.eye(9) - L0)
    assert np.allclose(big[nb(2), nb(2)], 1j * 200.0 * np.eye(9) - L0)


def test_block_zero_field():
    p = default_params()
    big = build_block_liouvillian(FloquetField.three(0, 0, 0, 0.0), p)
    L_A = build_atomic_liouvillian(p)
    for k in range(3):
        assert np.array_equal(big[nb(k), nb(k)], -L_A)


def test_block_off_diagonal_entries():
    p = default_params()
    am, a0, a1 = 0.3 + 0.1j, -2 + 1j, 40.0 + 5j
    big = build_block_liouvillian(FloquetField.three(am, a0, a1, 201.0), p)
    L_m1 = gain_up(am, p) + gain_down(np.conj(a1), p)
    L_p1 = gain_up(a1, p) + gain_down(np.conj(am), p)
    assert np.allclose(big[nb(0), nb(1)], -L_m1)
    assert np.allclose(big[nb(1), nb(2)], -L_m1)
    assert np.allclose(big[nb(1), nb(0)], -L_p1)
    assert np.allclose(big[nb(2), nb(1)], -L_p1)
    assert np.all(big[nb(0), nb(2)] == 0)


def test_nonlasing_limit_kernel():
    p = default_params()
    sol = solve_nonlasing(p)
    f = FloquetField.three(0, sol.alpha_ss, 0, 201.0)
    big = build_block_liouvillian(f, p)
    vec = np.concatenate([np.zeros(9), sol.rho_ss.reshape(-1, order="F"), np.zeros(9)])
    assert np.abs(big @ vec).max() <= 1e-10
    d = steady_kernel(big)
    assert np.allclose(d.rho_0, sol.rho_ss, atol=1e-10)
    assert np.abs(d.rho_1).max() <= 1e-10 and np.abs(d.rho_m1).max() <= 1e-10


def test_field_update_examples():
    p = default_params()
    f = FloquetField.three(0, 0, 1.0, 200.0)
    zero = FloquetDensity(tuple(np.diag([1.0, 0, 0]).astype(complex) if n == 0 else np.zeros((3, 3), complex)
                                for n in (-1, 0, 1)))
    assert field_update(zero, f, p) == (0j, 0j, 0j)
    sol = solve_nonlasing(p)
    d = FloquetDensity((np.zeros((3, 3), complex), sol.rho_ss, np.zeros((3, 3), complex)))
    assert field_update(d, f, p)[1] == pytest.approx(sol.alpha_ss, abs=1e-12)
    big_kappa = p.replace(kappa=1e7)
    rho = np.zeros((3, 3), complex)
    rho[1, 0] = 0.1 + 0.2j
    d = FloquetDensity((rho, rho, rho))
    for a in field_update(d, f, big_kappa):
        assert abs(a) == pytest.approx(2 * p.n_atoms * p.g_c * abs(rho[1, 0]) / 1e7, rel=1e-4)


@pytest.mark.parametrize("omega", [37.0, 201.0, -150.0, 1e3])
def test_trivial_branch_any_frequency(omega):
    p = default_params(delta_p=10.0, omega_p=2.0)
    sol = solve_nonlasing(p)
    assert residual_F(FloquetField.three(0, sol.alpha_ss, 0, omega), p) <= 1e-20


def test_zero_frequency_kernel_is_degenerate():
    # identical uncoupled blocks share the stationary state
    p = default_params(delta_p=10.0, omega_p=2.0)
    sol = solve_nonlasing(p)
    with pytest.raises(DegenerateKernelError):
        residual_F(FloquetField.three(0, sol.alpha_ss, 0, 0.0), p)


def test_weak_pump_only_zero_at_origin():
    p = default_params(delta_p=10.0, omega_p=2.0)
    sol = solve_nonlasing(p)
    assert sol.alpha_ss == pytest.approx(-3.3 - 2.6j, abs=0.05)
    for omega in (195.0, 202.0, 205.5, 210.0):
        F = [residual_F(FloquetField.three(0, sol.alpha_ss, a, omega), p) for a in np.geomspace(0.5, 400, 40)]
        assert min(F) > 1e-4
    assert not solve_selfconsistent(p).is_lasing
    assert lasing_branches(p) == []


def test_strong_pump_ring(strong_pump):
    p, sol = strong_pump
    assert sol.is_lasing
    f = sol.field
    assert f.alpha_p1.imag == 0 and f.alpha_p1.real > 0
    assert abs(f.alpha_p1) == pytest.approx(STRONG_PUMP_ALPHA1, rel=1e-6)
    assert abs(f.omega) == pytest.approx(STRONG_PUMP_OMEGA, rel=1e-6)
    assert abs(f.omega) == pytest.approx(205.5, abs=0.1)
    assert abs(f.omega) - abs(p.delta_c_prime) == pytest.approx(3.5, abs=0.1)
    assert f.alpha_0 == pytest.approx(-5.6 - 1.3j, abs=0.1)
    scale = 1 + sol.avg_intensity
    for phi in np.linspace(0, 2 * math.pi, 16, endpoint=False):
        assert residual_F(f.shifted(phi), p) <= 1e-10 * scale


def test_solution_invariants(strong_pump):
    p, sol = strong_pump
    assert sol.residual <= 1e-12 * (1 + sol.avg_intensity) ** 2
    d = sol.density
    assert d.pairing_error() <= 1e-8
    assert abs(np.trace(d.rho_0) - 1) <= 1e-12
    assert np.abs(d.rho_0 - d.rho_0.conj().T).max() <= 1e-8
    assert abs(np.trace(d.rho_1)) <= 1e-8 and abs(np.trace(d.rho_m1)) <= 1e-8
    sv = np.linalg.svd(build_block_liouvillian(sol.field, p), compute_uv=False)
    assert sv[-1] <= 1e-10 * sv[0]
    assert abs(sol.field.alpha_m1) <= 0.05 * abs(sol.field.alpha_p1)


def test_avg_intensity(strong_pump):
    _, sol = strong_pump
    f = sol.field
    assert avg_intensity(sol) == pytest.approx(sum(abs(a) ** 2 for a in f.alphas))
    assert avg_intensity(sol) >= abs(f.alpha_0) ** 2


def test_deep_below_threshold():
    p = default_params(n_atoms=1000)
    sol = solve_selfconsistent(p)
    ref = solve_nonlasing(p)
    assert not sol.is_lasing
    assert math.isnan(sol.omega)
    assert sol.field.alpha_0 == pytest.approx(ref.alpha_ss, abs=1e-10)
    assert sol.avg_intensity == pytest.approx(abs(ref.alpha_ss) ** 2, rel=1e-10)


def test_random_phase_seeds_converge_to_one_ring(strong_pump):
    p, ref = strong_pump
    rng = np.random.default_rng(11)
    for _ in range(4):
        phi = rng.uniform(0, 2 * math.pi)
        r = rng.uniform(60, 200)
        seed = FloquetField.three(0, ref.field.alpha_0, r * np.exp(1j * phi), -p.delta_c_prime)
        sol = solve_selfconsistent(p, seed=seed)
        assert sol.start == "seed"
        assert abs(sol.field.alpha_p1) == pytest.approx(abs(ref.field.alpha_p1), rel=1e-6)
        assert abs(sol.field.omega) == pytest.approx(abs(ref.field.omega), rel=1e-6)


def test_mirrored_seed_is_accepted(strong_pump):
    p, ref = strong_pump
    f = ref.field
    mirrored = FloquetField(tuple(reversed(f.alphas)), -f.omega)
    sol = solve_selfconsistent(p, seed=mirrored)
    assert sol.start == "seed"
    assert sol.field.omega > 0
    assert abs(sol.field.alpha_p1) == pytest.approx(abs(f.alpha_p1), rel=1e-8)


def test_bistable_point_has_two_lasing_roots():
    p = default_params(delta_p=25.0, omega_p=6.0)
    branches = lasing_branches(p)
    radii = sorted(abs(f.alpha_p1) for f in branches)
    assert len(radii) == 2
    assert radii[0] == pytest.approx(94.1, abs=0.5) and radii[1] == pytest.approx(139.5, abs=0.5)
    assert stability(p).s0.real < 0
    assert abs(solve_selfconsistent(p).field.alpha_p1) == pytest.approx(radii[1])


@pytest.mark.parametrize("kw", [dict(delta_p=0.0), dict(delta_p=20.0, omega_p=15.0), dict(delta_p=5.0, n_atoms=9000)])
def test_unstable_points_lase_near_cavity_frequency(kw):
    p = default_params(**kw)
    assert stability(p).lasing_unstable
    sol = solve_selfconsistent(p)
    assert abs(sol.field.alpha_p1) > 0.1
    assert abs(abs(sol.omega) - abs(p.delta_c_prime)) <= 0.15 * abs(p.delta_c_prime)


def test_truncation_check(strong_pump):
    p, sol = strong_pump
    assert truncation_check(sol, p) < 0.01


def test_general_cutoff_block_size():
    p = default_params()
    f = FloquetField((0, 0, 1 + 0j, 2, 30, 0.1, 0), 200.0)
    assert f.cutoff == 3
    assert build_block_liouvillian(f, p).shape == (63, 63)
    assert f.with_cutoff(1).alphas == (1, 2, 30)
