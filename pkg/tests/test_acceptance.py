"""End-to-end acceptance criteria, one test each; every test records a pass/fail line."""
import math

import numpy as np
import pytest

from conftest import hysteresis, long_default_run, record
from oracles import empty_cavity_roots, prony_exponents
from vlaser.config import parse_config
from vlaser.dynamics import MeanFieldState, integrate, time_averaged_intensity
from vlaser.estimates import ac_stark_shift, threshold_coefficient
from vlaser.floquet import FloquetField, lasing_branches, residual_F, solve_selfconsistent, truncation_check
from vlaser.harness import run
from vlaser.model import default_params
from vlaser.output import emit
from vlaser.stability import eval_C, find_primary_root, solve_nonlasing, stability, total_liouvillian


def check(number, passed, detail):
    record(number, bool(passed), detail)
    assert passed, detail


def test_criterion_01_ac_stark_shift():
    shift = ac_stark_shift(default_params())
    check(1, abs(shift - 8.23) <= 0.01, f"AC shift {shift:.5f} (target 8.23 +- 0.01)")


def test_criterion_02_threshold_coefficient():
    coeff = threshold_coefficient(default_params())
    check(2, 2.8e3 <= coeff <= 3.7e3, f"kappa/gamma_eff {coeff:.2f} (target [2800, 3700])")


def test_criterion_03_empty_cavity_pole():
    p = default_params(n_atoms=0)
    s0 = find_primary_root(solve_nonlasing(p), p).s0
    err = min(abs(s0 - r) for r in empty_cavity_roots(p.kappa, p.delta_c_prime))
    check(3, err <= 1e-8, f"s0 = {s0:.10f}, distance to -kappa/2 +- i delta_c' {err:.1e}")


def test_criterion_04_stability_matches_dynamics():
    worst_re = worst_im = 0.0
    signs = set()
    for n in (3000, 6000, 7000, 10000, 14000, 20000):
        p = default_params(delta_p=8.23, n_atoms=n)
        sol = solve_nonlasing(p)
        s0 = stability(p, sol).s0
        signs.add(s0.real > 0)
        dt = 0.005
        traj = integrate(p, MeanFieldState(sol.rho_ss, sol.alpha_ss + 1e-6), 25.0, stride=dt, rtol=1e-12, atol=1e-14)
        keep = traj.t >= 10.0
        ex = prony_exponents(traj.alpha[keep] - sol.alpha_ss, dt, order=2)
        fit = ex[np.argmax(ex.real)]
        worst_re = max(worst_re, abs(fit.real / s0.real - 1))
        worst_im = max(worst_im, abs(abs(fit.imag) / abs(s0.imag) - 1))
    ok = worst_re <= 0.05 and worst_im <= 0.02 and signs == {True, False}
    check(4, ok, f"6 points across threshold: max growth-rate error {worst_re:.1e} (<=5%), "
                 f"max beat-frequency error {worst_im:.1e} (<=2%)")


def test_criterion_05_emission_frequency():
    worst = 0.0
    for dp in np.linspace(-20.0, 40.0, 20):
        p = default_params(delta_p=float(dp))
        s0 = stability(p).s0
        worst = max(worst, abs(abs(s0.imag) / abs(p.delta_c_prime) - 1))
    check(5, worst <= 0.10, f"20 detunings in [-20, 40]: max ||Im s0|/|delta_c'| - 1| = {worst:.2e} (<=10%)")


LASING_POINTS = [dict(delta_p=10.0, omega_p=15.0), dict(delta_p=0.0),
                 dict(delta_p=10.0, n_atoms=12000), dict(delta_p=5.0, omega_p=8.0, n_atoms=15000)]


def test_criterion_06_floquet_matches_dynamics():
    gaps = []
    for kw in LASING_POINTS:
        p = default_params(**kw)
        sol = solve_selfconsistent(p)
        assert sol.is_lasing, kw
        traj = integrate(p, MeanFieldState.ground(1e-3), 4000.0, stride=1.0)
        gaps.append(abs(sol.avg_intensity / time_averaged_intensity(traj, 1000.0) - 1))
    check(6, max(gaps) <= 0.05, "4 lasing points, relative intensity gap " + ", ".join(f"{g:.3f}" for g in gaps)
          + " (<=5%)")


def test_criterion_07_u1_breaking():
    p = default_params(delta_p=10.0, omega_p=15.0)
    ref = solve_selfconsistent(p)
    rng = np.random.default_rng(2024)
    spread = 0.0
    for _ in range(10):
        seed = FloquetField.three(0, ref.field.alpha_0, rng.uniform(50, 200) * np.exp(2j * math.pi * rng.random()),
                                  -p.delta_c_prime * rng.uniform(0.95, 1.05))
        sol = solve_selfconsistent(p, seed=seed)
        assert sol.is_lasing
        spread = max(spread, abs(abs(sol.field.alpha_p1) / abs(ref.field.alpha_p1) - 1),
                     abs(abs(sol.omega) / abs(ref.omega) - 1))
    below = default_params(delta_p=10.0, omega_p=2.0)
    a_ss = solve_nonlasing(below).alpha_ss
    trivial = max(residual_F(FloquetField.three(0, a_ss, 0, w), below) for w in rng.uniform(-500, 500, 10))
    ok = spread <= 1e-6 and trivial <= 1e-20
    check(7, ok, f"10 random-phase starts: max relative spread {spread:.1e} (<=1e-6); "
                 f"trivial branch max F {trivial:.1e} (<=1e-20)")


@pytest.mark.slow
def test_criterion_08_hysteresis():
    big = hysteresis(25.0)
    on, off = big.forward_onset(), big.backward_extinction()
    small = hysteresis(10.0)
    gap = small.max_relative_gap()
    ok = on - off >= 2.0 and 3.0 <= off <= 11.0 and 3.0 <= on <= 11.0 and gap <= 0.10
    check(8, ok, f"delta_p=25: onset {on:.1f}, extinction {off:.1f}, width {on - off:.1f} (>=2, inside [3, 11]); "
                 f"delta_p=10: branch gap {gap:.3f} (<=0.10)")


def test_criterion_09_bistability():
    p = default_params(delta_p=25.0, omega_p=6.0)
    re_s0 = stability(p).s0.real
    sol = solve_selfconsistent(p)
    radii = sorted(abs(f.alpha_p1) for f in lasing_branches(p))
    ok = re_s0 < 0 and sol.is_lasing and abs(sol.field.alpha_p1) > 1
    check(9, ok, f"Re s0 = {re_s0:.4f} (<0) with lasing |alpha_1| = {abs(sol.field.alpha_p1):.2f}; "
                 f"lasing roots at |alpha_1| = {', '.join(f'{r:.1f}' for r in radii)}")


@pytest.mark.slow
def test_criterion_10_invariants():
    failures = []
    traj = long_default_run()
    rho = traj.rho
    drift = np.abs(np.trace(rho, axis1=1, axis2=2) - 1).max()
    herm = np.abs(rho - np.conj(np.transpose(rho, (0, 2, 1)))).max()
    min_eig = np.linalg.eigvalsh(0.5 * (rho + np.conj(np.transpose(rho, (0, 2, 1))))).min()
    if drift > 1e-8 or herm > 1e-8 or min_eig < -1e-8:
        failures.append("trajectory")

    conj_err = 0.0
    spectral = -np.inf
    for kw in (dict(), dict(delta_p=10.0, omega_p=15.0), dict(delta_p=25.0, omega_p=6.0), dict(n_atoms=1000)):
        p = default_params(**kw)
        sol = solve_nonlasing(p)
        for s in (0.1, 1.3, -0.2):
            C = eval_C(s, sol, p)
            conj_err = max(conj_err, abs(C[1, 1] - np.conj(C[0, 0])) / abs(C[0, 0]),
                           abs(C[1, 0] - np.conj(C[0, 1])) / max(1.0, abs(C[0, 1])))
        spectral = max(spectral, np.linalg.eigvals(total_liouvillian(sol.alpha_ss, p)).real.max())
    if conj_err > 1e-12:
        failures.append("C conjugation")
    if spectral > 1e-10:
        failures.append("Liouvillian spectrum")

    pairing = 0.0
    shares = []
    for kw in LASING_POINTS[:3]:
        p = default_params(**kw)
        sol = solve_selfconsistent(p)
        pairing = max(pairing, sol.density.pairing_error())
        shares.append(truncation_check(sol, p))
    if pairing > 1e-8:
        failures.append("pairing")
    if max(shares) >= 0.01:
        failures.append("truncation")
    check(10, not failures,
          f"trace drift {drift:.1e}, Hermiticity {herm:.1e}, min eigenvalue {min_eig:.1e}; "
          f"C conjugation {conj_err:.1e}; max Re spec(L) {spectral:.1e}; pairing {pairing:.1e}; "
          f"m=2 intensity share {max(shares):.1e}" + (f"; failed: {', '.join(failures)}" if failures else ""))


SWEEP = """
mode = sweep2d
seed = 17
[sweep]
point_mode = both
axis1 = n_atoms
axis1_lo = 4000
axis1_hi = 20000
axis1_count = 3
axis2 = delta_p
axis2_lo = -10
axis2_hi = 30
axis2_count = 3
"""


def test_criterion_11_determinism(tmp_path):
    cfg = parse_config(SWEEP)
    outputs = []
    for k, workers in enumerate((1, 1, 2)):
        path = tmp_path / f"sweep{k}.csv"
        emit(run(cfg.replace(workers=workers)), "csv", path)
        outputs.append(path.read_bytes())
    same = len(set(outputs)) == 1
    check(11, same, f"3x3 sweep at workers 1, 1, 2: {'byte-identical' if same else 'outputs differ'} CSV "
                    f"({len(outputs[0])} bytes)")
