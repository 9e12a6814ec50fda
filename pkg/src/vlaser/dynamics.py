"""Time integration of the coupled mean-field equations for (rho, alpha).

    d alpha / dt = -(i delta_c' + kappa / 2) alpha - i N g_c Tr(s_ge rho)
    d rho / dt   = (L_A + L_F[alpha]) rho

The heavy lifting is done by the compiled integrator in ``_rk``; this module
handles parameters, ramps, sampling and the hysteresis protocol.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _rk
from .model import PARAM_NAMES, PhysicalParams, build_atomic_liouvillian, build_field_liouvillian
from .model import apply as apply_superop
from .model import coherence_ge, ground_state

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """The integrator failed (step underflow, invariant violation, ...)."""


@dataclass
class MeanFieldState:
    rho: np.ndarray
    alpha: complex
    t: float = 0.0

    @classmethod
    def ground(cls, alpha: complex = 0.0) -> "MeanFieldState":
        return cls(ground_state(), complex(alpha), 0.0)

    def pack(self) -> np.ndarray:
        y = np.empty(10, dtype=complex)
        y[0] = self.alpha
        y[1:] = np.asarray(self.rho, dtype=complex).reshape(-1, order="F")
        return y


@dataclass(frozen=True)
class RampProtocol:
    """Linear ramp of one parameter: up at ``rate`` to ``peak`` at ``turn_time``, back to zero at 2T."""

    rate: float
    turn_time: float
    parameter: str = "omega_p"

    def __post_init__(self):
        if self.parameter not in PARAM_NAMES:
            raise ValueError(f"unknown ramp parameter {self.parameter!r}")
        if not self.turn_time > 0:
            raise ValueError("ramp turn time must be positive")
        if not self.rate > 0:
            raise ValueError("ramp rate must be positive")

    @classmethod
    def to_peak(cls, peak: float, turn_time: float, parameter: str = "omega_p") -> "RampProtocol":
        return cls(peak / turn_time, turn_time, parameter)

    @property
    def peak(self) -> float:
        return self.rate * self.turn_time

    @property
    def duration(self) -> float:
        return 2.0 * self.turn_time

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= self.turn_time, self.rate * t,
                        np.where(t <= 2 * self.turn_time, self.peak - self.rate * (t - self.turn_time), 0.0))

    def packed(self) -> np.ndarray:
        return np.array([1.0, PARAM_NAMES.index(self.parameter), self.rate, self.turn_time, self.peak])


@dataclass
class Trajectory:
    """Samples of the integration at a fixed stride.

    ``intensity_mean[k]`` and ``alpha_mean[k]`` are the time averages of
    |alpha|^2 and alpha over (t[k-1], t[k]], integrated over every accepted
    step, so they resolve oscillations faster than the stride. Trajectories
    built by hand may leave them as None.
    """

    t: np.ndarray
    alpha: np.ndarray
    rho: np.ndarray
    ramp_value: np.ndarray
    intensity_mean: np.ndarray | None = None
    alpha_mean: np.ndarray | None = None
    steps: int = 0
    rejected: int = 0

    def __len__(self):
        return len(self.t)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.alpha) ** 2

    @property
    def final_state(self) -> MeanFieldState:
        return MeanFieldState(self.rho[-1].copy(), complex(self.alpha[-1]), float(self.t[-1]))

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


TRAJECTORY_COLUMNS = ("t", "re_alpha", "im_alpha", "intensity", "rho_gg", "rho_ee", "rho_aa",
                      "re_rho_ge", "im_rho_ge", "omega_p_instantaneous")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    from .output import fmt

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for k in range(len(traj)):
            rho = traj.rho[k]
            a = traj.alpha[k]
            # rho_ge here is the matrix element <g|rho|e>.
            w.writerow([fmt(traj.t[k]), fmt(a.real), fmt(a.imag), fmt(abs(a) ** 2),
                        fmt(rho[0, 0].real), fmt(rho[1, 1].real), fmt(rho[2, 2].real),
                        fmt(rho[0, 1].real), fmt(rho[0, 1].imag), fmt(traj.ramp_value[k])])


def _packed_params(p: PhysicalParams) -> np.ndarray:
    return np.array([getattr(p, name) for name in PARAM_NAMES], dtype=float)


def derivative(state: MeanFieldState, p: PhysicalParams) -> tuple[np.ndarray, complex]:
    """(d rho/dt, d alpha/dt) from the superoperators of the model module."""
    L = build_atomic_liouvillian(p) + build_field_liouvillian(state.alpha, p)
    drho = apply_superop(L, state.rho)
    dalpha = (-(1j * p.delta_c_prime + 0.5 * p.kappa) * state.alpha
              - 1j * p.n_atoms * p.g_c * coherence_ge(state.rho))
    return drho, complex(dalpha)


def max_step(p: PhysicalParams, ramp: RampProtocol | None = None) -> float:
    """Step cap of 2 / (largest rate or detuning), ramp peak included."""
    vals = [abs(v) for v in p.as_dict().values()]
    vals.remove(abs(p.n_atoms))
    vals += [abs(p.delta_c_prime), 1.0]
    if ramp is not None and ramp.parameter != "n_atoms":
        vals.append(abs(ramp.peak))
    return 2.0 / max(vals)


def integrate(p: PhysicalParams, init: MeanFieldState, t_end: float, ramp: RampProtocol | None = None,
              stride: float = 1.0, rtol: float = 1e-8, atol: float = 1e-10, h0: float = 1e-4,
              h_max: float | None = None, max_steps: int = 2_000_000_000, invariant_tol: float = 1e-6,
              check_positivity: bool = True, method: str = "dop853") -> Trajectory:
    """Integrate from ``init.t`` to ``t_end`` with samples every ``stride``.

    With a ramp, the ramped parameter follows the ramp profile of absolute
    time t and is evaluated inside every derivative call. ``method`` picks the
    embedded pair: "dop853" (8th order, default) or "dp54" (5th order).
    ``h_max`` defaults to ``max_step(p, ramp)``.
    """
    t0 = float(init.t)
    if not t_end > t0:
        raise ValueError("t_end must be after the initial time")
    if not stride > 0:
        raise ValueError("stride must be positive")
    par = _packed_params(p)
    ramp_arr = ramp.packed() if ramp is not None else np.array([0.0, PARAM_NAMES.index("omega_p"), 0, 1, 0])
    methods = {"dp54": _rk.METHOD_DP54, "dop853": _rk.METHOD_DOP853}
    if method not in methods:
        raise ValueError(f"unknown method {method!r}")
    out = _rk.integrate_rk(methods[method], init.pack(), t0, float(t_end), float(stride), par, ramp_arr,
                             float(rtol), float(atol), float(h0),
                             float(max_step(p, ramp) if h_max is None else h_max), int(max_steps), float(invariant_tol))
    status, n, times, states, ramp_vals, int_mean, alpha_mean, n_acc, n_rej, _ = out
    if status == _rk.STATUS_UNDERFLOW:
        raise IntegrationError(f"step size underflow at t = {times[n - 1]:.6g}; the problem looks stiff")
    if status == _rk.STATUS_INVARIANT:
        rho = states[n - 1, 1:].reshape(3, 3, order="F")
        raise IntegrationError(
            f"density matrix left the physical set at t = {times[n - 1]:.6g}: "
            f"|Tr rho - 1| = {abs(np.trace(rho) - 1):.2e}, "
            f"||rho - rho^+|| = {np.abs(rho - rho.conj().T).max():.2e}")
    if status == _rk.STATUS_MAXSTEPS:
        raise IntegrationError(f"maximum number of steps reached at t = {times[n - 1]:.6g}")
    if status == _rk.STATUS_NONFINITE:
        raise IntegrationError(f"non-finite state at t = {times[n - 1]:.6g}")
    rho = np.ascontiguousarray(np.transpose(states[:n, 1:].reshape(n, 3, 3), (0, 2, 1)))
    traj = Trajectory(t=times[:n].copy(), alpha=states[:n, 0].copy(), rho=rho,
                      ramp_value=ramp_vals[:n].copy(), intensity_mean=int_mean[:n].copy(),
                      alpha_mean=alpha_mean[:n].copy(), steps=int(n_acc), rejected=int(n_rej))
    if check_positivity:
        herm = 0.5 * (traj.rho + np.conj(np.transpose(traj.rho, (0, 2, 1))))
        min_eig = np.linalg.eigvalsh(herm).min()
        if min_eig < -invariant_tol:
            raise IntegrationError(f"density matrix lost positivity (min eigenvalue {min_eig:.2e})")
    return traj


def _window_mask(traj: Trajectory, window: float, end: float | None = None) -> np.ndarray:
    end = traj.t[-1] if end is None else end
    return (traj.t > end - window + 1e-12) & (traj.t <= end + 1e-12)


def time_averaged_intensity(traj: Trajectory, window: float, end: float | None = None) -> float:
    """Mean of |alpha(t)|^2 over the window (end - window, end], default end = last sample."""
    span = traj.t[-1] - traj.t[0]
    if not 0 < window <= span + 1e-12:
        raise ValueError("window must be positive and no longer than the trajectory")
    stride = np.min(np.diff(traj.t)) if len(traj) > 1 else np.inf
    if traj.intensity_mean is not None:
        if window < stride * (1 - 1e-9):
            raise ValueError("window shorter than the sample stride")
        mask = _window_mask(traj, window, end)
        widths = np.diff(traj.t, prepend=traj.t[0])[mask]
        return float(np.sum(traj.intensity_mean[mask] * widths) / np.sum(widths))
    if window < 4 * stride:
        raise ValueError("window must cover several samples")
    end = traj.t[-1] if end is None else end
    mask = (traj.t >= end - window - 1e-12) & (traj.t <= end + 1e-12)
    tt = traj.t[mask]
    return float(np.trapezoid(traj.intensity[mask], tt) / (tt[-1] - tt[0]))


def binned(traj: Trajectory, window: float):
    """Averages over consecutive windows: (centre ramp value, mean |alpha|^2, |mean alpha|^2, end time).

    The window must be a whole multiple of the sampling stride.
    """
    if traj.intensity_mean is None:
        raise ValueError("trajectory carries no bin averages")
    stride = traj.t[1] - traj.t[0]
    per = int(round(window / stride))
    if per < 1 or abs(per * stride - window) > 1e-6 * window:
        raise ValueError("window must be a multiple of the sample stride")
    n_bins = (len(traj) - 1) // per
    idx = 1 + np.arange(n_bins * per).reshape(n_bins, per)
    widths = np.diff(traj.t)[idx - 1]
    tot = widths.sum(axis=1)
    inten = (traj.intensity_mean[idx] * widths).sum(axis=1) / tot
    amean = (traj.alpha_mean[idx] * widths).sum(axis=1) / tot
    t_start = traj.t[idx[:, 0] - 1]
    t_end = traj.t[idx[:, -1]]
    centre = traj.ramp_value[idx[:, per // 2]] if per % 2 == 1 else 0.5 * (
        traj.ramp_value[idx[:, per // 2 - 1]] + traj.ramp_value[idx[:, per // 2]])
    return centre, inten, np.abs(amean) ** 2, t_end, t_start


# ---------------------------------------------------------------------------
# Hysteresis


def default_window(p: PhysicalParams) -> float:
    """50 beat periods between the scattered pump field and the cavity-resonant field."""
    return 50.0 * 2.0 * math.pi / abs(p.delta_c_prime)


def seed_amplitude(rng_seed: int | None = 0, magnitude: float = 1e-3) -> complex:
    rng = np.random.default_rng(rng_seed)
    return magnitude * np.exp(2j * math.pi * rng.random())


@dataclass
class HysteresisResult:
    grid: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    forward_oscillating: np.ndarray
    backward_oscillating: np.ndarray
    window: float
    lasing_level: float

    def lasing_mask(self, branch: str) -> np.ndarray:
        osc = self.forward_oscillating if branch == "forward" else self.backward_oscillating
        return osc > self.lasing_level

    def forward_onset(self) -> float:
        """Smallest ramp value at which the forward branch lases."""
        mask = self.lasing_mask("forward")
        return float(self.grid[np.argmax(mask)]) if mask.any() else float("nan")

    def backward_extinction(self) -> float:
        """Smallest ramp value at which the backward branch still lases."""
        mask = self.lasing_mask("backward")
        return float(self.grid[np.argmax(mask)]) if mask.any() else float("nan")

    def max_relative_gap(self) -> float:
        """max |forward - backward| normalised by the largest intensity on either branch."""
        scale = max(self.forward.max(), self.backward.max())
        return float(np.max(np.abs(self.forward - self.backward)) / scale)

    def hysteresis_width(self) -> float:
        on, off = self.forward_onset(), self.backward_extinction()
        return on - off


def run_hysteresis(p: PhysicalParams, ramp: RampProtocol, seed_alpha: complex = 1e-3,
                   window: float | None = None, grid_step: float = 0.1,
                   lasing_level: float = 1.0, rtol: float = 1e-8,
                   atol: float = 1e-10) -> HysteresisResult:
    """Ramp a parameter up and back down, starting from the ground state with a seed field.

    Both branches are window averages of |alpha|^2 on a common grid of the
    ramped parameter. The lasing part of a window is the oscillating
    intensity <|alpha|^2> - |<alpha>|^2, which removes the static scattered
    pump field; a window lases when it exceeds ``lasing_level``.
    """
    if window is None:
        window = default_window(p)
    p0 = p.replace(**{ramp.parameter: 0.0})
    init = MeanFieldState.ground(seed_alpha)
    stride = window / 10.0
    traj = integrate(p0, init, ramp.duration, ramp=ramp, stride=stride, rtol=rtol, atol=atol,
                     check_positivity=False)
    min_eig = _min_sample_eigenvalue(traj)
    if min_eig < -1e-8:
        log.warning("ramp trajectory min eigenvalue %.2e", min_eig)
    centre, inten, coh, t_end, t_start = binned(traj, window)
    up = t_end <= ramp.turn_time + 1e-9
    down = t_start >= ramp.turn_time - 1e-9
    grid = np.arange(grid_step, ramp.peak - 0.5 * grid_step, grid_step)
    grid = grid[(grid >= centre[up].min()) & (grid <= centre[up].max())
                & (grid >= centre[down].min()) & (grid <= centre[down].max())]

    def interp(mask, values):
        x = centre[mask]
        order = np.argsort(x)
        return np.interp(grid, x[order], values[mask][order])

    osc = inten - coh
    return HysteresisResult(grid=grid, forward=interp(up, inten), backward=interp(down, inten),
                            forward_oscillating=interp(up, osc), backward_oscillating=interp(down, osc),
                            window=window, lasing_level=lasing_level)


@dataclass
class DescendingBranch:
    grid: np.ndarray
    intensity: np.ndarray
    oscillating: np.ndarray
    lasing_level: float

    def extinction(self) -> float:
        """Smallest ramp value at which the branch still lases."""
        mask = self.oscillating > self.lasing_level
        return float(self.grid[np.argmax(mask)]) if mask.any() else float("nan")


def run_descending(p: PhysicalParams, ramp: RampProtocol, state: MeanFieldState,
                   window: float | None = None, grid_step: float = 0.1,
                   lasing_level: float = 1.0, rtol: float = 1e-8,
                   atol: float = 1e-10) -> DescendingBranch:
    """Only the downward half of a ramp, started from ``state`` at the peak.

    ``state.t`` is reset to the turn time. Cheaper than ``run_hysteresis``
    when only the extinction point matters.
    """
    if window is None:
        window = default_window(p)
    init = MeanFieldState(state.rho, state.alpha, ramp.turn_time)
    traj = integrate(p, init, ramp.duration, ramp=ramp, stride=window / 10.0, rtol=rtol, atol=atol,
                     check_positivity=False)
    centre, inten, coh, _, _ = binned(traj, window)
    grid = np.arange(grid_step, ramp.peak - 0.5 * grid_step, grid_step)
    grid = grid[(grid >= centre.min()) & (grid <= centre.max())]
    order = np.argsort(centre)
    return DescendingBranch(grid=grid, intensity=np.interp(grid, centre[order], inten[order]),
                            oscillating=np.interp(grid, centre[order], (inten - coh)[order]),
                            lasing_level=lasing_level)


def _min_sample_eigenvalue(traj: Trajectory) -> float:
    herm = 0.5 * (traj.rho + np.conj(np.transpose(traj.rho, (0, 2, 1))))
    return float(np.linalg.eigvalsh(herm).min())
