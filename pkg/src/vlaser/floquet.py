"""Mean-field Floquet method for the lasing steady state.

Field and density matrix are expanded as ``alpha(t) = sum_n alpha_n exp(i n w t)``
and ``rho(t) = sum_n rho_n exp(i n w t)`` for ``|n| <= m``. For a given field
and frequency the harmonics rho_n span the kernel of a block Liouvillian;
the field is then self-consistent when it equals the field radiated by those
harmonics. The production cutoff is m = 1; larger m only serves to check
the truncation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .model import DIM, PhysicalParams, build_atomic_liouvillian, devectorize, gain_down, gain_up
from .stability import DegenerateKernelError, NonLasingSolution, solve_nonlasing

log = logging.getLogger(__name__)

LASING_THRESHOLD = 1e-3
_NB = DIM * DIM


class FloquetError(RuntimeError):
    """No start of the self-consistent solve converged."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass(frozen=True)
class FloquetField:
    """Field harmonics alpha_{-m..m} and the lasing frequency omega."""

    alphas: tuple
    omega: float

    def __post_init__(self):
        if len(self.alphas) % 2 != 1:
            raise ValueError("need an odd number of harmonics")
        object.__setattr__(self, "alphas", tuple(complex(a) for a in self.alphas))

    @classmethod
    def three(cls, alpha_m1: complex, alpha_0: complex, alpha_p1: complex, omega: float):
        return cls((alpha_m1, alpha_0, alpha_p1), float(omega))

    @property
    def cutoff(self) -> int:
        return len(self.alphas) // 2

    def __getitem__(self, n: int) -> complex:
        m = self.cutoff
        if abs(n) > m:
            return 0j
        return self.alphas[n + m]

    @property
    def alpha_m1(self) -> complex:
        return self[-1]

    @property
    def alpha_0(self) -> complex:
        return self[0]

    @property
    def alpha_p1(self) -> complex:
        return self[1]

    def with_cutoff(self, m: int) -> "FloquetField":
        return FloquetField(tuple(self[n] for n in range(-m, m + 1)), self.omega)

    def shifted(self, phi: float) -> "FloquetField":
        """Time translation by phi / omega: alpha_n -> alpha_n exp(i n phi)."""
        m = self.cutoff
        return FloquetField(
            tuple(a * np.exp(1j * n * phi) for n, a in zip(range(-m, m + 1), self.alphas)),
            self.omega)

    def canonical(self) -> "FloquetField":
        """Gauge with alpha_1 real and non-negative."""
        a1 = self.alpha_p1
        if a1 == 0:
            return self
        return self.shifted(-np.angle(a1))


@dataclass
class FloquetDensity:
    rhos: tuple

    @property
    def cutoff(self) -> int:
        return len(self.rhos) // 2

    def __getitem__(self, n: int) -> np.ndarray:
        m = self.cutoff
        if abs(n) > m:
            return np.zeros((DIM, DIM), dtype=complex)
        return self.rhos[n + m]

    @property
    def rho_m1(self):
        return self[-1]

    @property
    def rho_0(self):
        return self[0]

    @property
    def rho_1(self):
        return self[1]

    def pairing_error(self) -> float:
        """max_n ||rho_{-n} - rho_n^+||, zero for a real-time density matrix."""
        m = self.cutoff
        return max(float(np.max(np.abs(self[-n] - self[n].conj().T))) for n in range(0, m + 1))


@dataclass
class FloquetSolution:
    field: FloquetField
    density: FloquetDensity
    residual: float
    start: str = ""
    history: list = field(default_factory=list)

    @property
    def is_lasing(self) -> bool:
        return abs(self.field.alpha_p1) > LASING_THRESHOLD

    @property
    def omega(self) -> float:
        """Lasing frequency; NaN when not lasing (the frequency is undefined)."""
        return self.field.omega if self.is_lasing else float("nan")

    @property
    def avg_intensity(self) -> float:
        return avg_intensity(self)


def build_block_liouvillian(f: FloquetField, p: PhysicalParams,
                            L_A: np.ndarray | None = None) -> np.ndarray:
    """Block matrix whose kernel holds the harmonics (rho_{-m}, ..., rho_m).

    Diagonal blocks are ``i w n - (L_A + G_u[a_0] + G_d[a_0*])`` and the
    block coupling rho_{n'} into row n is ``-(G_u[a_{n-n'}] + G_d[a*_{n'-n}])``.
    """
    m = f.cutoff
    if L_A is None:
        L_A = build_atomic_liouvillian(p)
    size = 2 * m + 1
    big = np.zeros((size * _NB, size * _NB), dtype=complex)
    for i, n in enumerate(range(-m, m + 1)):
        for j, n2 in enumerate(range(-m, m + 1)):
            k = n - n2
            block = gain_up(f[k], p) + gain_down(np.conj(f[-k]), p)
            if k == 0:
                block = block + L_A - 1j * f.omega * n * np.eye(_NB)
            big[i * _NB:(i + 1) * _NB, j * _NB:(j + 1) * _NB] = -block
    return big


def steady_kernel(block_l: np.ndarray, degeneracy_tol: float = 1e-8) -> FloquetDensity:
    """Trace-normalized kernel of the block Liouvillian."""
    size = block_l.shape[0] // _NB
    _, sv, vh = np.linalg.svd(block_l)
    if sv[-2] < degeneracy_tol * sv[0]:
        raise DegenerateKernelError(
            f"two singular values below {degeneracy_tol:g} x largest ({sv[-1]:.2e}, {sv[-2]:.2e})")
    vec = vh[-1].conj()
    rhos = [devectorize(vec[i * _NB:(i + 1) * _NB]) for i in range(size)]
    tr = np.trace(rhos[size // 2])
    if abs(tr) < 1e-12 * np.linalg.norm(vec):
        raise DegenerateKernelError("kernel vector has vanishing Tr(rho_0)")
    return FloquetDensity(tuple(r / tr for r in rhos))


def field_update(d: FloquetDensity, f: FloquetField, p: PhysicalParams) -> tuple:
    """Field radiated by the density harmonics, one amplitude per harmonic."""
    m = d.cutoff
    out = []
    for n in range(-m, m + 1):
        coh = d[n][1, 0]  # Tr(s_ge rho_n)
        out.append(-1j * p.n_atoms * p.g_c * coh / (1j * (p.delta_c_prime + f.omega * n) + 0.5 * p.kappa))
    return tuple(out)


def self_consistency(f: FloquetField, p: PhysicalParams, L_A=None):
    """(density, updated field) for a trial field."""
    d = steady_kernel(build_block_liouvillian(f, p, L_A))
    return d, field_update(d, f, p)


def residual_F(f: FloquetField, p: PhysicalParams, L_A=None) -> float:
    """Sum over harmonics of |alpha_n - alpha~_n|^2."""
    _, new = self_consistency(f, p, L_A)
    return float(sum(abs(a - b) ** 2 for a, b in zip(f.alphas, new)))


def avg_intensity(sol: FloquetSolution) -> float:
    """Time-averaged |alpha|^2, the sum of squared harmonic magnitudes."""
    return float(sum(abs(a) ** 2 for a in sol.field.alphas))


# ---------------------------------------------------------------------------
# Self-consistent solve
#
# The root solve works with the field equations of motion,
#     e_n = (i (delta_c' + n w) + kappa / 2) alpha_n + i N g_c Tr(s_ge rho_n),
# which vanish exactly where F does but stay smooth across the narrow cavity
# resonance. The lasing row is divided by alpha_1 so the trivial branch
# alpha_1 = 0 is not a root. Unknowns are gauge fixed (alpha_1 = r >= 0).


def field_equations(f: FloquetField, d: FloquetDensity, p: PhysicalParams) -> np.ndarray:
    """Complex residuals e_n of the field equations for every harmonic."""
    m = f.cutoff
    ng = p.n_atoms * p.g_c
    return np.array([(1j * (p.delta_c_prime + n * f.omega) + 0.5 * p.kappa) * f[n] + 1j * ng * d[n][1, 0]
                     for n in range(-m, m + 1)])


def _pack(f: FloquetField) -> np.ndarray:
    """Complex alpha_n for n != 1 as (re, im) pairs, then omega."""
    m = f.cutoff
    x = []
    for n in range(-m, m + 1):
        if n != 1:
            x += [f[n].real, f[n].imag]
    return np.array(x + [f.omega])


def _unpack(x: np.ndarray, r: float, m: int) -> FloquetField:
    alphas = []
    k = 0
    for n in range(-m, m + 1):
        if n == 1:
            alphas.append(complex(r, 0.0))
        else:
            alphas.append(complex(x[k], x[k + 1]))
            k += 2
    return FloquetField(tuple(alphas), float(x[-1]))


def _scaled_residual(f: FloquetField, p: PhysicalParams, L_A) -> np.ndarray:
    d = steady_kernel(build_block_liouvillian(f, p, L_A))
    e = field_equations(f, d, p)
    m = f.cutoff
    e[m + 1] = e[m + 1] / f[1]
    return e


def _fixed_r_system(x, r, m, p, L_A):
    """All field equations except the gain balance (real part of the lasing row)."""
    e = _scaled_residual(_unpack(x, r, m), p, L_A)
    out = []
    for n, v in zip(range(-m, m + 1), e):
        out += [v.imag] if n == 1 else [v.real, v.imag]
    return np.array(out)


def _full_system(z, m, p, L_A):
    e = _scaled_residual(_unpack(z[:-1], z[-1], m), p, L_A)
    return np.concatenate([e.real, e.imag])


def _hybr(fun, x0, args):
    try:
        res = scipy.optimize.root(fun, x0, args=args, method="hybr",
                                  options={"xtol": 1e-13, "maxfev": 200 * (len(x0) + 1)})
    except (DegenerateKernelError, np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(res.x)):
        return None
    return res


def _gain_at(r, x0, m, p, L_A):
    """Solve the fixed-amplitude system; return (x, net gain) or (None, nan)."""
    res = _hybr(_fixed_r_system, x0, (r, m, p, L_A))
    if res is None or np.linalg.norm(res.fun) > 1e-8 * max(1.0, abs(res.x[-1])):
        return None, float("nan")
    e = _scaled_residual(_unpack(res.x, r, m), p, L_A)
    # Re(e_1 / alpha_1) = kappa/2 - (gain); negative means net gain at this amplitude.
    return res.x, float(e[m + 1].real)


def _polish(z0, m, p, L_A, tol):
    res = _hybr(_full_system, z0, (m, p, L_A))
    if res is None:
        return None
    z = res.x
    if abs(z[-1]) <= LASING_THRESHOLD:
        return None
    f = _unpack(z[:-1], z[-1], m)
    try:
        d = steady_kernel(build_block_liouvillian(f, p, L_A))
    except DegenerateKernelError:
        return None
    e = field_equations(f, d, p)
    if np.max(np.abs(e)) > tol * max(1.0, abs(z[-1])):
        return None
    return f.canonical() if f[1].real >= 0 else f.shifted(np.pi)


def _mirror(f: FloquetField) -> FloquetField:
    """Same time series with n -> -n and w -> -w."""
    return FloquetField(tuple(reversed(f.alphas)), -f.omega)


def _solution(f: FloquetField, p: PhysicalParams, L_A, start: str, history) -> FloquetSolution:
    d, new = self_consistency(f, p, L_A)
    F = float(sum(abs(a - b) ** 2 for a, b in zip(f.alphas, new)))
    return FloquetSolution(field=f, density=d, residual=F, start=start, history=history)


def nonlasing_field(sol: NonLasingSolution, omega: float, m: int = 1) -> FloquetField:
    alphas = [0j] * (2 * m + 1)
    alphas[m] = sol.alpha_ss
    return FloquetField(tuple(alphas), omega)


DEFAULT_AMPLITUDES = tuple(np.geomspace(0.25, 4000.0, 45))


def lasing_branches(p: PhysicalParams, m: int = 1, tol: float = 1e-10,
                    amplitudes=DEFAULT_AMPLITUDES, nonlasing: NonLasingSolution | None = None,
                    L_A=None, history=None) -> list[FloquetField]:
    """All lasing solutions bracketed by a continuation scan in |alpha_1|.

    Starting from the non-lasing field at w = -delta_c', the amplitude is
    raised along ``amplitudes`` while alpha_0, alpha_-1 and w are re-solved
    at each step. Every sign change of the net gain brackets a lasing
    solution, which is then polished with all unknowns free.
    """
    if L_A is None:
        L_A = build_atomic_liouvillian(p)
    if nonlasing is None:
        nonlasing = solve_nonlasing(p)
    history = [] if history is None else history
    x = _pack(nonlasing_field(nonlasing, -p.delta_c_prime, m))
    prev = None
    found: list[FloquetField] = []
    for r in amplitudes:
        x_new, gain = _gain_at(r, x, m, p, L_A)
        history.append((f"scan r={r:.4g}", gain))
        if x_new is None:
            prev = None
            continue
        if prev is not None and np.sign(prev[2]) != np.sign(gain):
            r0, x0, g0 = prev
            # Secant guess between the bracketing amplitudes.
            r_guess = r0 + (r - r0) * g0 / (g0 - gain)
            w = (r_guess - r0) / (r - r0)
            z0 = np.concatenate([(1 - w) * x0 + w * x_new, [r_guess]])
            f = _polish(z0, m, p, L_A, tol)
            history.append((f"polish near r={r_guess:.4g}", f is not None))
            if f is not None and all(abs(abs(f[1]) - abs(q[1])) > 1e-6 * abs(f[1]) for q in found):
                found.append(f)
        prev = (r, x_new, gain)
        x = x_new
    return found


def solve_selfconsistent(p: PhysicalParams, seed: FloquetField | None = None, m: int = 1,
                         tol: float = 1e-10, amplitudes=DEFAULT_AMPLITUDES,
                         nonlasing: NonLasingSolution | None = None) -> FloquetSolution:
    """Self-consistent Floquet state with the largest lasing amplitude.

    A caller seed (any alpha_1 phase) is tried first and accepted if it
    converges to a lasing state. Otherwise the amplitude scan of
    ``lasing_branches`` runs; with several lasing solutions (bistable
    regime) the one with the largest |alpha_1| is returned, which is the
    branch a slow ramp follows. Without a lasing solution the non-lasing
    state is returned (alpha_+-1 = 0, frequency undefined).
    """
    L_A = build_atomic_liouvillian(p)
    if nonlasing is None:
        nonlasing = solve_nonlasing(p)
    history: list = []
    if seed is not None:
        s = seed.with_cutoff(m)
        if abs(s[-1]) > abs(s[1]):
            s = _mirror(s)
        if abs(s[1]) > LASING_THRESHOLD:
            s = s.canonical()
            f = _polish(np.concatenate([_pack(s), [abs(s[1])]]), m, p, L_A, tol)
            history.append(("seed", f is not None))
            if f is not None:
                return _solution(f, p, L_A, "seed", history)
    branches = lasing_branches(p, m, tol, amplitudes, nonlasing, L_A, history)
    if branches:
        best = max(branches, key=lambda f: abs(f[1]))
        return _solution(best, p, L_A, "scan", history)
    if not nonlasing.converged:
        raise FloquetError(f"no lasing solution and the non-lasing solve did not converge "
                           f"(residual {nonlasing.residual:.2e})", history)
    return _solution(nonlasing_field(nonlasing, -p.delta_c_prime, m), p, L_A, "nonlasing", history)


def truncation_check(sol: FloquetSolution, p: PhysicalParams, m: int = 2,
                     tol: float = 1e-10) -> float:
    """Share of the intensity carried by harmonics beyond |n| = 1 at cutoff ``m``.

    The m = 1 solution is re-solved with ``m`` harmonics, seeded from itself.
    """
    if not sol.is_lasing:
        raise ValueError("truncation check needs a lasing solution")
    ext = solve_selfconsistent(p, seed=sol.field, m=m, tol=tol)
    if ext.start != "seed":
        raise FloquetError(f"cutoff {m} solve did not continue the m = 1 solution", ext.history)
    extra = sum(abs(ext.field[n]) ** 2 for n in range(-m, m + 1) if abs(n) > 1)
    return float(extra / ext.avg_intensity)
