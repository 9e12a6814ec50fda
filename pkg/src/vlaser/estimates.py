"""Closed-form estimates of gain, threshold and light shift.

These never steer a solver; they seed scans and appear in reports.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .model import PhysicalParams

# Excited-state population assumed for a strongly pumped narrow transition.
SATURATED_POPULATION = 0.5


def gamma_eff(p: PhysicalParams) -> float:
    """Effective cavity-assisted decay rate of |e>, g_c^2 Omega_m^2 / (gamma_a Delta_c^2)."""
    if p.gamma_a <= 0:
        raise ZeroDivisionError("gamma_eff needs gamma_a > 0")
    if p.delta_c == 0:
        raise ZeroDivisionError("gamma_eff needs delta_c != 0")
    return p.g_c ** 2 * p.omega_m ** 2 / (p.gamma_a * p.delta_c ** 2)


def threshold_coefficient(p: PhysicalParams) -> float:
    """kappa / gamma_eff, the atom number times the required excited population."""
    ge = gamma_eff(p)
    if ge <= 0:
        raise ZeroDivisionError("threshold estimate needs gamma_eff > 0")
    return p.kappa / ge


def threshold_population(p: PhysicalParams) -> float:
    """Excited-state population needed for gain to beat cavity loss, kappa/(N gamma_eff)."""
    if p.n_atoms <= 0:
        raise ZeroDivisionError("threshold_population needs n_atoms >= 1")
    return threshold_coefficient(p) / p.n_atoms


def ac_stark_shift(p: PhysicalParams) -> float:
    """Light shift of |g> from the off-resonant MOT beam, -Omega_m^2 / (4 Delta_m)."""
    if p.delta_m == 0:
        raise ZeroDivisionError("ac_stark_shift needs delta_m != 0")
    return -p.omega_m ** 2 / (4.0 * p.delta_m)


def qualitative_threshold_n(p: PhysicalParams, population: float = SATURATED_POPULATION) -> int:
    """Atom number at which ``population`` in |e> just compensates the loss."""
    return int(math.ceil(threshold_coefficient(p) / population))


@dataclass(frozen=True)
class EstimateReport:
    gamma_eff: float
    threshold_population: float
    ac_stark_shift: float
    qualitative_threshold_N: int

    def as_dict(self) -> dict:
        return asdict(self)


def estimate_report(p: PhysicalParams) -> EstimateReport:
    return EstimateReport(
        gamma_eff=gamma_eff(p),
        threshold_population=threshold_population(p),
        ac_stark_shift=ac_stark_shift(p),
        qualitative_threshold_N=qualitative_threshold_n(p),
    )
