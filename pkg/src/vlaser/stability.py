"""Non-lasing steady state and Laplace-domain stability analysis.

The non-lasing solution (rho_ss, alpha_ss) contains only pump light scattered
into the cavity. Field fluctuations around it obey a 2x2 linear system
C(s) b(s) = x(s) in the Laplace domain; the roots of D(s) = det C(s) are the
growth exponents of the fluctuations, and the root with the largest real part
(s0) decides whether the non-lasing state is stable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import (
    DIM,
    SIGMA_EG,
    SIGMA_GE,
    PhysicalParams,
    build_atomic_liouvillian,
    build_field_liouvillian,
    coherence_ge,
    devectorize,
    vectorize,
)

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance."""


class DegenerateKernelError(RuntimeError):
    """The steady state of a Liouvillian is not unique."""


class SingularResolventError(ZeroDivisionError):
    """s lies on the spectrum of the Liouvillian (a pole of the resolvent)."""


class RootNotFoundError(RuntimeError):
    pass


@dataclass
class NonLasingSolution:
    rho_ss: np.ndarray
    alpha_ss: complex
    converged: bool
    residual: float
    iterations: int = 0

    @property
    def intensity(self) -> float:
        return abs(self.alpha_ss) ** 2


@dataclass
class StabilityResult:
    s0: complex
    all_roots_found: list = field(default_factory=list)

    @property
    def lasing_unstable(self) -> bool:
        return self.s0.real > 0

    @property
    def emission_frequency(self) -> float:
        return self.s0.imag


def total_liouvillian(alpha: complex, p: PhysicalParams) -> np.ndarray:
    return build_atomic_liouvillian(p) + build_field_liouvillian(alpha, p)


def scattered_field(rho: np.ndarray, p: PhysicalParams, freq: float = 0.0) -> complex:
    """Cavity amplitude driven by the atomic coherence oscillating at ``freq``."""
    return -1j * p.n_atoms * p.g_c * coherence_ge(rho) / (1j * (p.delta_c_prime + freq) + 0.5 * p.kappa)


def liouvillian_kernel(liouvillian: np.ndarray, degeneracy_tol: float = 1e-8) -> np.ndarray:
    """Trace-normalized null vector of a 9x9 Liouvillian, as a 3x3 matrix."""
    _, sv, vh = np.linalg.svd(liouvillian)
    if sv[-2] < degeneracy_tol * max(sv[0], 1.0):
        raise DegenerateKernelError(
            f"second smallest singular value {sv[-2]:.3e} is also ~0; steady state not unique")
    rho = devectorize(vh[-1].conj())
    rho = rho / np.trace(rho)
    # Remove the rounding-level anti-Hermitian part left by the SVD.
    return 0.5 * (rho + rho.conj().T)


def _nonlasing_map(alpha: complex, p: PhysicalParams, L_A: np.ndarray):
    rho = liouvillian_kernel(L_A + build_field_liouvillian(alpha, p))
    return rho, scattered_field(rho, p)


def solve_nonlasing(p: PhysicalParams, damping: float = 0.5, tol: float = 1e-10,
                    max_iter: int = 10_000, alpha_init: complex = 0.0) -> NonLasingSolution:
    """Self-consistent non-lasing steady state.

    Damped fixed-point iteration on alpha; each step takes the kernel of
    L_A + L_F[alpha] and recomputes the scattered field. The result is then
    polished with a few Newton steps on the two real components of alpha so
    that the self-consistency residual sits at rounding level.
    """
    L_A = build_atomic_liouvillian(p)
    alpha = complex(alpha_init)
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        rho, new = _nonlasing_map(alpha, p, L_A)
        residual = abs(new - alpha)
        if residual <= tol:
            break
        alpha = (1 - damping) * alpha + damping * new
        if not np.isfinite(residual):
            break

    if residual > tol:
        log.debug("fixed-point iteration stalled at residual %.3e; trying Newton", residual)
    alpha, rho, residual = _newton_polish(alpha, p, L_A)
    converged = residual <= tol
    if not converged:
        log.warning("non-lasing solution did not converge, residual %.3e", residual)
    return NonLasingSolution(rho_ss=rho, alpha_ss=alpha, converged=converged,
                             residual=float(residual), iterations=it)


def _newton_polish(alpha: complex, p: PhysicalParams, L_A: np.ndarray, steps: int = 50):
    def resid(x):
        a = complex(x[0], x[1])
        _, new = _nonlasing_map(a, p, L_A)
        r = new - a
        return np.array([r.real, r.imag])

    x = np.array([alpha.real, alpha.imag])
    r = resid(x)
    for _ in range(steps):
        if np.linalg.norm(r) < 1e-14 * max(1.0, np.linalg.norm(x)):
            break
        h = 1e-7 * max(1.0, np.linalg.norm(x))
        jac = np.empty((2, 2))
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = h
            jac[:, k] = (resid(x + dx) - resid(x - dx)) / (2 * h)
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        # Backtrack so a bad start cannot throw the iteration away.
        lam = 1.0
        while lam > 1e-4:
            r_new = resid(x + lam * dx)
            if np.linalg.norm(r_new) < np.linalg.norm(r):
                break
            lam *= 0.5
        else:
            break
        x = x + lam * dx
        r = r_new
    a = complex(x[0], x[1])
    rho, new = _nonlasing_map(a, p, L_A)
    return a, rho, abs(new - a)


def nonlasing_residuals(sol: NonLasingSolution, p: PhysicalParams) -> tuple[float, float]:
    """(field self-consistency residual, norm of L rho_ss)."""
    field_res = abs(sol.alpha_ss - scattered_field(sol.rho_ss, p))
    L = total_liouvillian(sol.alpha_ss, p)
    return field_res, float(np.linalg.norm(L @ vectorize(sol.rho_ss)))


# ---------------------------------------------------------------------------
# Resolvent and coupling matrix


def _resolvent_lu(s: complex, L: np.ndarray, rcond_tol: float = 1e-13):
    W = s * np.eye(DIM * DIM) - L
    lu, piv = scipy.linalg.lu_factor(W, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = max(np.abs(W).max(), 1.0)
    if diag.min() <= rcond_tol * scale:
        raise SingularResolventError(f"s = {s} lies on the Liouvillian spectrum")
    return lu, piv


def resolvent_solve(s: complex, alpha_ss: complex, rhs: np.ndarray, p: PhysicalParams,
                    L: np.ndarray | None = None) -> np.ndarray:
    """Solve (s - L_A - L_F[alpha_ss]) x = rhs for a 3x3 matrix x."""
    if L is None:
        L = total_liouvillian(alpha_ss, p)
    lu_piv = _resolvent_lu(complex(s), L)
    x = scipy.linalg.lu_solve(lu_piv, vectorize(rhs).astype(complex), check_finite=False)
    return devectorize(x)


class Dispersion:
    """D(s) = det C(s) around a fixed non-lasing solution.

    Holds the Liouvillian and the commutator sources so that repeated
    evaluations during root finding cost one 9x9 LU factorization each.
    """

    def __init__(self, sol: NonLasingSolution, p: PhysicalParams):
        self.sol = sol
        self.p = p
        self.L = total_liouvillian(sol.alpha_ss, p)
        rho = sol.rho_ss
        # Sources for the d alpha* and d alpha responses of the atom.
        self.src_ge = vectorize(SIGMA_GE @ rho - rho @ SIGMA_GE)
        self.src_eg = vectorize(SIGMA_EG @ rho - rho @ SIGMA_EG)
        # Tr(s_ge X) = X[e, g] -> vec index of (1, 0); Tr(s_eg X) = X[g, e].
        self._i_eg = 1  # column-major index of element (1, 0)
        self._i_ge = DIM  # column-major index of element (0, 1)
        self.ng2 = p.n_atoms * p.g_c ** 2

    def responses(self, s: complex):
        """(X, Y, X', Y') with X' = Tr(s_eg W^-1 [s_ge, rho]), Y' = Tr(s_eg W^-1 [s_eg, rho])."""
        lu_piv = _resolvent_lu(complex(s), self.L)
        sol = scipy.linalg.lu_solve(lu_piv, np.stack([self.src_ge, self.src_eg], axis=1),
                                    check_finite=False)
        x_ge, x_eg = sol[:, 0], sol[:, 1]
        return x_ge[self._i_eg], x_eg[self._i_eg], x_ge[self._i_ge], x_eg[self._i_ge]

    def xy(self, s: complex) -> tuple[complex, complex]:
        X, Y, _, _ = self.responses(s)
        return complex(X), complex(Y)

    def coupling_matrix(self, s: complex) -> np.ndarray:
        p = self.p
        X, Y, Xc, Yc = self.responses(s)
        dcp = p.delta_c_prime
        # Second row follows from the delta alpha* equation; it equals
        # conj(C11(conj s)), conj(C12(conj s)).
        return np.array([
            [s + 1j * dcp + 0.5 * p.kappa + self.ng2 * Y, self.ng2 * X],
            [-self.ng2 * Yc, s - 1j * dcp + 0.5 * p.kappa - self.ng2 * Xc],
        ], dtype=complex)

    def __call__(self, s: complex) -> complex:
        c = self.coupling_matrix(s)
        return complex(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])

    def pole_distance(self, s: complex) -> float:
        return float(np.min(np.abs(np.linalg.eigvals(self.L) - s)))


def eval_XY(s: complex, sol: NonLasingSolution, p: PhysicalParams) -> tuple[complex, complex]:
    return Dispersion(sol, p).xy(s)


def eval_C(s: complex, sol: NonLasingSolution, p: PhysicalParams) -> np.ndarray:
    return Dispersion(sol, p).coupling_matrix(s)


def dispersion(s: complex, sol: NonLasingSolution, p: PhysicalParams) -> complex:
    return Dispersion(sol, p)(s)


# ---------------------------------------------------------------------------
# Linearized dynamics (independent route to the same exponents)


def linearized_generator(sol: NonLasingSolution, p: PhysicalParams) -> np.ndarray:
    """11x11 generator of (d alpha, d alpha*, vec d rho) around the fixed point.

    Its spectrum is the union of the roots of D(s) and the Liouvillian
    eigenvalues not cancelled by the Schur complement.
    """
    n = DIM * DIM
    J = np.zeros((n + 2, n + 2), dtype=complex)
    dcp = p.delta_c_prime
    J[0, 0] = -(1j * dcp + 0.5 * p.kappa)
    J[1, 1] = -(-1j * dcp + 0.5 * p.kappa)
    J[0, 2 + 1] = -1j * p.n_atoms * p.g_c  # Tr(s_ge d rho) = d rho[e, g]
    J[1, 2 + DIM] = 1j * p.n_atoms * p.g_c  # Tr(s_eg d rho) = d rho[g, e]
    rho = sol.rho_ss
    J[2:, 0] = -1j * p.g_c * vectorize(SIGMA_EG @ rho - rho @ SIGMA_EG)
    J[2:, 1] = -1j * p.g_c * vectorize(SIGMA_GE @ rho - rho @ SIGMA_GE)
    J[2:, 2:] = total_liouvillian(sol.alpha_ss, p)
    return J


# ---------------------------------------------------------------------------
# Root finding


def default_seeds(p: PhysicalParams) -> list[complex]:
    dcp = p.delta_c_prime
    ims = [0.0, dcp, -dcp, dcp + 0.5 * p.omega_m, dcp - 0.5 * p.omega_m,
           -(dcp + 0.5 * p.omega_m), -(dcp - 0.5 * p.omega_m)]
    offsets = [-p.kappa, 0.0, p.kappa]
    return [complex(re, im) for im in ims for re in offsets]


def newton_root(D, s: complex, step: float = 1e-6, tol: float = 1e-10,
                max_iter: int = 200) -> complex | None:
    """Damped Newton on an analytic function with central-difference derivative."""
    try:
        f = D(s)
    except SingularResolventError:
        return None
    for _ in range(max_iter):
        try:
            df = (D(s + step) - D(s - step)) / (2 * step)
        except SingularResolventError:
            return None
        if df == 0 or not np.isfinite(df):
            return None
        ds = -f / df
        lam = 1.0
        while True:
            try:
                f_new = D(s + lam * ds)
            except SingularResolventError:
                f_new = np.inf
            if abs(f_new) < abs(f) or lam < 1e-3:
                break
            lam *= 0.5
        if not np.isfinite(f_new):
            return None
        s = s + lam * ds
        f = f_new
        if abs(lam * ds) <= tol * max(1.0, abs(s)):
            return s
    return None


def _root_ok(D: Dispersion, s: complex, poles: np.ndarray, pole_tol: float = 1e-6) -> bool:
    if np.min(np.abs(poles - s)) < pole_tol:
        return False
    try:
        f = abs(D(s))
        ref = abs(D(s + 1.0))
    except SingularResolventError:
        return False
    return f <= 1e-8 * max(ref, 1.0)


def find_primary_root(sol: NonLasingSolution, p: PhysicalParams,
                      seeds: list[complex] | None = None,
                      use_linearization: bool = True) -> StabilityResult:
    """Root of D(s) with the largest real part.

    Newton runs from the default seed grid (or the caller's seeds). Among
    roots whose real parts tie, the one with Im(s) nearest -delta_c' wins. Unless
    disabled, the eigenvalues of the linearized generator are added as seeds
    too; they sit on top of the roots, so the search cannot miss one.
    """
    D = Dispersion(sol, p)
    if seeds is None:
        seeds = default_seeds(p)
    seeds = list(seeds)
    if use_linearization:
        seeds += list(np.linalg.eigvals(linearized_generator(sol, p)))
    poles = np.linalg.eigvals(D.L)
    roots: list[complex] = []
    for seed in seeds:
        r = newton_root(D, complex(seed))
        if r is None or not _root_ok(D, r, poles):
            continue
        if all(abs(r - q) >= 1e-6 for q in roots):
            roots.append(r)
    if not roots:
        raise RootNotFoundError("Newton did not converge from any seed")
    roots.sort(key=lambda z: (-z.real, z.imag))
    # Roots pair up as (s, s*) with equal real parts; report the member that
    # oscillates at the emitted frequency, Im(s) close to -delta_c'.
    top = roots[0].real
    tied = [z for z in roots if z.real >= top - 1e-7 * max(1.0, abs(top))]
    s0 = min(tied, key=lambda z: (abs(z.imag + p.delta_c_prime), z.imag))
    return StabilityResult(s0=s0, all_roots_found=roots)


def stability(p: PhysicalParams, sol: NonLasingSolution | None = None, **kwargs) -> StabilityResult:
    if sol is None:
        sol = solve_nonlasing(p)
        if not sol.converged:
            raise ConvergenceError(f"non-lasing solution residual {sol.residual:.3e}")
    return find_primary_root(sol, p, **kwargs)


def growth_rate(p: PhysicalParams) -> float:
    return stability(p).s0.real


def threshold_bisect(p: PhysicalParams, axis: str, lo: float, hi: float,
                     tol: float = 1e-3, max_iter: int = 200) -> float:
    """Parameter value where Re(s0) crosses zero between ``lo`` and ``hi``."""
    f_lo = growth_rate(p.replace(**{axis: lo}))
    f_hi = growth_rate(p.replace(**{axis: hi}))
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(
            f"Re(s0) has the same sign at {axis}={lo} ({f_lo:.3e}) and {axis}={hi} ({f_hi:.3e})")
    for _ in range(max_iter):
        if abs(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = growth_rate(p.replace(**{axis: mid}))
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)
