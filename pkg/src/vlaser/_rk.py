"""Compiled explicit Runge-Kutta integrators (DOP853, DP54) for the mean-field equations.

State layout (complex128, length 10): y[0] = alpha, y[1:] = column-stacked
rho. Parameters are passed as a float array in PhysicalParams field order;
one entry can be replaced by a triangular ramp evaluated at every stage.
"""
import numpy as np
import scipy.integrate._ivp.dop853_coefficients as _dop
from numba import njit

# Index of each PhysicalParams field in the packed parameter array.
GAMMA_E, GAMMA_A, KAPPA, G_C, DELTA_C, DELTA_P, DELTA_M, OMEGA_P, OMEGA_M, N_ATOMS = range(10)

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_INVARIANT = 2
STATUS_MAXSTEPS = 3
STATUS_NONFINITE = 4

# Dormand-Prince 5(4): rows of A, weights B, nodes C, error weights E
# (5th minus embedded 4th order, including the FSAL stage).
DP54_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
])
DP54_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
DP54_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
DP54_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

# Dormand-Prince 8(5,3); the coefficient tables ship with scipy.
DOP853_A = np.ascontiguousarray(_dop.A[:_dop.N_STAGES, :_dop.N_STAGES])
DOP853_B = np.ascontiguousarray(_dop.B)
DOP853_C = np.ascontiguousarray(_dop.C[:_dop.N_STAGES])
DOP853_E5 = np.ascontiguousarray(_dop.E5)
DOP853_E3 = np.ascontiguousarray(_dop.E3)

METHOD_DP54 = 0
METHOD_DOP853 = 1


@njit(cache=True)
def ramp_value(t, ramp):
    """Triangular ramp: rate*t up to turn time T, then back down to zero at 2T.

    ramp = (active, param index, rate, turn time, peak).
    """
    rate = ramp[2]
    turn = ramp[3]
    peak = ramp[4]
    if t <= turn:
        return rate * t
    if t <= 2.0 * turn:
        return peak - rate * (t - turn)
    return 0.0


@njit(cache=True)
def rhs(t, y, par, ramp, out):
    gamma_e = par[GAMMA_E]
    gamma_a = par[GAMMA_A]
    kappa = par[KAPPA]
    g = par[G_C]
    d_c = par[DELTA_C]
    d_p = par[DELTA_P]
    d_m = par[DELTA_M]
    om_p = par[OMEGA_P]
    om_m = par[OMEGA_M]
    n_at = par[N_ATOMS]
    if ramp[0] != 0.0:
        v = ramp_value(t, ramp)
        k = int(ramp[1])
        if k == GAMMA_E:
            gamma_e = v
        elif k == GAMMA_A:
            gamma_a = v
        elif k == KAPPA:
            kappa = v
        elif k == G_C:
            g = v
        elif k == DELTA_C:
            d_c = v
        elif k == DELTA_P:
            d_p = v
        elif k == DELTA_M:
            d_m = v
        elif k == OMEGA_P:
            om_p = v
        elif k == OMEGA_M:
            om_m = v
        else:
            n_at = v

    alpha = y[0]
    # rho[k, l] = y[1 + k + 3 l]
    r00 = y[1]
    r10 = y[2]
    r20 = y[3]
    r01 = y[4]
    r11 = y[5]
    r21 = y[6]
    r02 = y[7]
    r12 = y[8]
    r22 = y[9]

    out[0] = -(1j * (d_c - d_p) + 0.5 * kappa) * alpha - 1j * n_at * g * r10

    # Total Hamiltonian in (g, e, a), Hermitian.
    h01 = 0.5 * om_p + g * np.conj(alpha)
    h10 = 0.5 * om_p + g * alpha
    h02 = 0.5 * om_m + 0j
    h20 = h02
    h11 = -d_p + 0j
    h22 = -d_m + 0j

    # -i (H rho - rho H), written out for the sparsity of H (h00 = h12 = 0).
    hr00 = h01 * r10 + h02 * r20
    hr01 = h01 * r11 + h02 * r21
    hr02 = h01 * r12 + h02 * r22
    hr10 = h10 * r00 + h11 * r10
    hr11 = h10 * r01 + h11 * r11
    hr12 = h10 * r02 + h11 * r12
    hr20 = h20 * r00 + h22 * r20
    hr21 = h20 * r01 + h22 * r21
    hr22 = h20 * r02 + h22 * r22

    rh00 = r01 * h10 + r02 * h20
    rh01 = r00 * h01 + r01 * h11
    rh02 = r00 * h02 + r02 * h22
    rh10 = r11 * h10 + r12 * h20
    rh11 = r10 * h01 + r11 * h11
    rh12 = r10 * h02 + r12 * h22
    rh20 = r21 * h10 + r22 * h20
    rh21 = r20 * h01 + r21 * h11
    rh22 = r20 * h02 + r22 * h22

    ge = 0.5 * gamma_e
    ga = 0.5 * gamma_a
    out[1] = -1j * (hr00 - rh00) + gamma_e * r11 + gamma_a * r22
    out[2] = -1j * (hr10 - rh10) - ge * r10
    out[3] = -1j * (hr20 - rh20) - ga * r20
    out[4] = -1j * (hr01 - rh01) - ge * r01
    out[5] = -1j * (hr11 - rh11) - gamma_e * r11
    out[6] = -1j * (hr21 - rh21) - (ge + ga) * r21
    out[7] = -1j * (hr02 - rh02) - ga * r02
    out[8] = -1j * (hr12 - rh12) - (ge + ga) * r12
    out[9] = -1j * (hr22 - rh22) - gamma_a * r22


@njit(cache=True)
def _rms(err, y, y_new, rtol, atol):
    acc = 0.0
    for i in range(y.shape[0]):
        sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        acc += (abs(err[i]) / sc) ** 2
    return np.sqrt(acc / y.shape[0])


@njit(cache=True)
def _rk_step(t, y, h, K, A, B, C, par, ramp, y_tmp, y_new):
    """One explicit step; K[0] must hold f(t, y). Fills K[1:s] and y_new and K[s] = f(t + h, y_new)."""
    n_stages = B.shape[0]
    n_dim = y.shape[0]
    for s in range(1, n_stages):
        for i in range(n_dim):
            acc = 0j
            for j in range(s):
                a = A[s, j]
                if a != 0.0:
                    acc += a * K[j, i]
            y_tmp[i] = y[i] + h * acc
        rhs(t + C[s] * h, y_tmp, par, ramp, K[s])
    for i in range(n_dim):
        acc = 0j
        for j in range(n_stages):
            acc += B[j] * K[j, i]
        y_new[i] = y[i] + h * acc
    rhs(t + h, y_new, par, ramp, K[n_stages])


@njit(cache=True)
def _error_norm(method, h, K, y, y_new, rtol, atol, err, err3):
    n_dim = y.shape[0]
    if method == METHOD_DP54:
        for i in range(n_dim):
            acc = 0j
            for j in range(DP54_E.shape[0]):
                acc += DP54_E[j] * K[j, i]
            err[i] = h * acc
        return _rms(err, y, y_new, rtol, atol), 5.0
    # Hairer's combined 5th/3rd order estimate for DOP853.
    for i in range(n_dim):
        a5 = 0j
        a3 = 0j
        for j in range(DOP853_E5.shape[0]):
            a5 += DOP853_E5[j] * K[j, i]
            a3 += DOP853_E3[j] * K[j, i]
        err[i] = a5
        err3[i] = a3
    e5 = _rms(err, y, y_new, rtol, atol) ** 2
    e3 = _rms(err3, y, y_new, rtol, atol) ** 2
    denom = e5 + 0.01 * e3
    if denom == 0.0:
        return 0.0, 8.0
    return abs(h) * e5 / np.sqrt(denom), 8.0


@njit(cache=True)
def integrate_rk(method, y0, t0, t_end, stride, par, ramp, rtol, atol, h0, h_max, max_steps, inv_tol):
    """Adaptive integration with samples every ``stride``.

    Returns (status, n_samples, times, states, ramp values, bin means of
    |alpha|^2, bin means of alpha, accepted steps, rejected steps, final h).
    Bin k holds the averages over (t_{k-1}, t_k] by the trapezoid rule on
    accepted steps; bin 0 holds the initial point values. Steps are
    shortened to land exactly on the sample times and never exceed
    ``h_max``; without the cap, perturbations below rtol |y| riding on a
    fixed point are stepped over rather than resolved.
    """
    if method == METHOD_DP54:
        A, B, C = DP54_A, DP54_B, DP54_C
    else:
        A, B, C = DOP853_A, DOP853_B, DOP853_C
    n_stages = B.shape[0]
    n_dim = y0.shape[0]
    n_samp = int(np.floor((t_end - t0) / stride + 1e-9)) + 1
    if t0 + (n_samp - 1) * stride < t_end - 1e-12 * max(1.0, abs(t_end)):
        n_samp += 1
    times = np.empty(n_samp)
    states = np.empty((n_samp, n_dim), dtype=np.complex128)
    ramp_vals = np.empty(n_samp)
    int_mean = np.empty(n_samp)
    alpha_mean = np.empty(n_samp, dtype=np.complex128)

    y = y0.copy()
    y_new = np.empty_like(y)
    y_tmp = np.empty_like(y)
    err = np.empty_like(y)
    err3 = np.empty_like(y)
    K = np.empty((n_stages + 1, n_dim), dtype=np.complex128)

    t = t0
    times[0] = t
    states[0] = y
    ramp_vals[0] = ramp_value(t, ramp) if ramp[0] != 0.0 else par[int(ramp[1])]
    int_mean[0] = abs(y[0]) ** 2
    alpha_mean[0] = y[0]
    acc_int = 0.0
    acc_alpha = 0.0 + 0.0j
    bin_start = t
    k_samp = 1
    next_t = min(t0 + stride, t_end) if n_samp > 1 else t_end

    rhs(t, y, par, ramp, K[0])
    h = h0
    n_acc = 0
    n_rej = 0
    status = STATUS_OK
    while k_samp < n_samp:
        if n_acc + n_rej >= max_steps:
            status = STATUS_MAXSTEPS
            break
        if h > h_max:
            h = h_max
        hit = False
        if t + h >= next_t - 1e-13 * max(1.0, abs(next_t)):
            h_step = next_t - t
            hit = True
        else:
            h_step = h
        if h_step <= 1e-13 * max(1.0, abs(t)):
            status = STATUS_UNDERFLOW
            break

        _rk_step(t, y, h_step, K, A, B, C, par, ramp, y_tmp, y_new)
        en, order = _error_norm(method, h_step, K, y, y_new, rtol, atol, err, err3)
        if not np.isfinite(en):
            status = STATUS_NONFINITE
            break
        expo = -1.0 / order

        if en <= 1.0:
            a_old = y[0]
            a_new = y_new[0]
            acc_int += 0.5 * h_step * (abs(a_old) ** 2 + abs(a_new) ** 2)
            acc_alpha += 0.5 * h_step * (a_old + a_new)
            t = next_t if hit else t + h_step
            for i in range(n_dim):
                y[i] = y_new[i]
                K[0, i] = K[n_stages, i]
            n_acc += 1
            fac = 10.0 if en == 0.0 else min(10.0, max(0.2, 0.9 * en ** expo))
            if hit:
                times[k_samp] = t
                states[k_samp] = y
                ramp_vals[k_samp] = ramp_value(t, ramp) if ramp[0] != 0.0 else par[int(ramp[1])]
                width = t - bin_start
                int_mean[k_samp] = acc_int / width
                alpha_mean[k_samp] = acc_alpha / width
                acc_int = 0.0
                acc_alpha = 0.0 + 0.0j
                bin_start = t
                tr = y[1] + y[5] + y[9]
                herm = max(abs(y[2] - np.conj(y[4])), abs(y[3] - np.conj(y[7])), abs(y[6] - np.conj(y[8])))
                herm = max(herm, abs(y[1].imag), abs(y[5].imag), abs(y[9].imag))
                k_samp += 1
                if abs(tr - 1.0) > inv_tol or herm > inv_tol:
                    status = STATUS_INVARIANT
                    break
                if k_samp < n_samp:
                    next_t = min(t0 + k_samp * stride, t_end)
                # A shortened landing step must not shrink the next one.
                h = max(h, h_step * fac) if fac >= 1.0 else min(h, h_step * fac)
            else:
                h = h_step * fac
        else:
            n_rej += 1
            h = h_step * max(0.2, 0.9 * en ** expo)

    return (status, k_samp, times, states, ramp_vals, int_mean, alpha_mean, n_acc, n_rej, h)
