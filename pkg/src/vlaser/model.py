"""Parameters, three-level operator algebra and Liouvillian superoperators.

Basis order is fixed to (g, e, a) = (0, 1, 2). Superoperators act on
column-stacked vectorized 3x3 matrices, so that ``vec(A X B) =
kron(B.T, A) @ vec(X)``. All rates and detunings are in units of the narrow
linewidth gamma_e, and hbar = 1.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

LEVELS = {"g": 0, "e": 1, "a": 2}
DIM = 3

_ID = np.eye(DIM, dtype=complex)


@dataclass(frozen=True)
class PhysicalParams:
    """Model rates and detunings in units of gamma_e.

    The defaults are the common parameter set of the V-level cold-atom laser
    (Yb-174 intercombination line with a MOT on the broad transition).
    """

    gamma_e: float = 1.0
    gamma_a: float = 159.0
    kappa: float = 0.39
    g_c: float = 0.33
    delta_c: float = -192.0
    delta_p: float = 0.0
    delta_m: float = -192.0
    omega_p: float = math.sqrt(140.0)
    omega_m: float = 79.5
    n_atoms: float = 20000

    def __post_init__(self):
        for name in ("gamma_e", "gamma_a", "kappa", "g_c"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative rate, got {value!r}")
        for name in ("delta_c", "delta_p", "delta_m", "omega_p", "omega_m"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        # n_atoms = 0 is accepted as the empty-cavity limit used by the
        # stability analysis; negative values are never physical.
        if not np.isfinite(self.n_atoms) or self.n_atoms < 0:
            raise ValueError(f"n_atoms must be >= 0, got {self.n_atoms!r}")

    @property
    def delta_c_prime(self) -> float:
        """Cavity detuning from the pump, delta_c - delta_p."""
        return self.delta_c - self.delta_p

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


PARAM_NAMES = tuple(f.name for f in dataclasses.fields(PhysicalParams))


def default_params(**overrides) -> PhysicalParams:
    """Default parameter block (Omega_m = gamma_a / 2) with optional overrides."""
    return PhysicalParams(**overrides)


def sigma(k: str, l: str) -> np.ndarray:
    """Transition operator |k><l| for levels k, l in {'g', 'e', 'a'}."""
    out = np.zeros((DIM, DIM), dtype=complex)
    out[LEVELS[k], LEVELS[l]] = 1.0
    return out


SIGMA_GE = sigma("g", "e")
SIGMA_EG = sigma("e", "g")
SIGMA_GA = sigma("g", "a")


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(rho).reshape(-1, order="F")


def devectorize(vec: np.ndarray, dim: int = DIM) -> np.ndarray:
    return np.asarray(vec).reshape((dim, dim), order="F")


def apply(superop: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply a 9x9 superoperator to a 3x3 matrix."""
    return devectorize(superop @ vectorize(rho))


def spre(a: np.ndarray) -> np.ndarray:
    """Superoperator of left multiplication, rho -> a rho."""
    return np.kron(_ID, a)


def spost(b: np.ndarray) -> np.ndarray:
    """Superoperator of right multiplication, rho -> rho b."""
    return np.kron(b.T, _ID)


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i [h, rho]."""
    return -1j * (spre(h) - spost(h))


def dissipator_superop(jump: np.ndarray) -> np.ndarray:
    jdj = jump.conj().T @ jump
    return np.kron(jump.conj(), jump) - 0.5 * spre(jdj) - 0.5 * spost(jdj)


def dissipator_action(jump: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator D[J] rho = J rho J^+ - (J^+ J rho + rho J^+ J) / 2."""
    jd = jump.conj().T
    jdj = jd @ jump
    return jump @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj)


def build_atomic_hamiltonian(p: PhysicalParams) -> np.ndarray:
    h = -p.delta_p * sigma("e", "e") - p.delta_m * sigma("a", "a")
    h = h + 0.5 * p.omega_p * (sigma("g", "e") + sigma("e", "g"))
    h = h + 0.5 * p.omega_m * (sigma("g", "a") + sigma("a", "g"))
    return h


def build_atomic_liouvillian(p: PhysicalParams) -> np.ndarray:
    """9x9 matrix of rho -> -i[H_A, rho] + gamma_e D[s_ge] rho + gamma_a D[s_ga] rho."""
    return (
        commutator_superop(build_atomic_hamiltonian(p))
        + p.gamma_e * dissipator_superop(SIGMA_GE)
        + p.gamma_a * dissipator_superop(SIGMA_GA)
    )


_COMM_EG = commutator_superop(SIGMA_EG)
_COMM_GE = commutator_superop(SIGMA_GE)


def gain_up(alpha: complex, p: PhysicalParams) -> np.ndarray:
    """Field coupling through sigma_eg: rho -> -i g_c alpha [s_eg, rho]."""
    return p.g_c * alpha * _COMM_EG


def gain_down(alpha_conj: complex, p: PhysicalParams) -> np.ndarray:
    """Field coupling through sigma_ge: rho -> -i g_c alpha* [s_ge, rho].

    Takes the already conjugated amplitude, so Floquet blocks can pass
    ``conj(alpha_{-n})`` directly.
    """
    return p.g_c * alpha_conj * _COMM_GE


def build_field_liouvillian(alpha: complex, p: PhysicalParams) -> np.ndarray:
    """-i [H_F(alpha), .] with H_F = g_c (alpha* s_ge + alpha s_eg)."""
    return gain_up(alpha, p) + gain_down(np.conj(alpha), p)


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    """Tr(op rho)."""
    return complex(np.trace(op @ rho))


def coherence_ge(rho: np.ndarray) -> complex:
    """Tr(s_ge rho) = rho[e, g]."""
    return complex(rho[1, 0])


def is_physical(rho: np.ndarray, herm_tol: float = 1e-10, trace_tol: float = 1e-10,
                eig_tol: float = 1e-8) -> bool:
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        return False
    if abs(np.trace(rho) - 1.0) > trace_tol:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() >= -eig_tol)


def ground_state() -> np.ndarray:
    return sigma("g", "g")
