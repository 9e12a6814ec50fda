"""Run orchestration for every CLI mode; each runner returns a Dataset."""
from __future__ import annotations

import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .estimates import estimate_report
from .floquet import FloquetError, FloquetField, solve_selfconsistent
from .model import PhysicalParams
from .output import Dataset
from .stability import (ConvergenceError, DegenerateKernelError, RootNotFoundError,
                        SingularResolventError, find_primary_root, solve_nonlasing,
                        threshold_bisect)

log = logging.getLogger(__name__)

# Exceptions that mark a single grid point as failed rather than the run.
POINT_ERRORS = (ConvergenceError, DegenerateKernelError, RootNotFoundError, SingularResolventError,
                FloquetError, np.linalg.LinAlgError, ArithmeticError)
MAX_FAILED_FRACTION = 0.10

STABILITY_COLUMNS = ["re_s0", "im_s0", "unstable"]
FLOQUET_COLUMNS = ["is_lasing", "abs_alpha1_sq", "abs_alpha0_sq", "avg_intensity", "omega"]
NAN = float("nan")


class SolverFailure(RuntimeError):
    """A run could not produce its result (CLI exit code 2)."""


def _report_meta(p: PhysicalParams) -> dict:
    meta = {"params": p.as_dict()}
    try:
        meta["estimates"] = estimate_report(p).as_dict()
    except ZeroDivisionError:
        meta["estimates"] = None
    return meta


# ---------------------------------------------------------------------------
# Per-point evaluation (runs inside worker processes)


def _stability_point(p: PhysicalParams) -> dict:
    sol = solve_nonlasing(p)
    if not sol.converged:
        raise ConvergenceError(f"non-lasing residual {sol.residual:.2e}")
    s0 = find_primary_root(sol, p).s0
    return {"re_s0": s0.real, "im_s0": s0.imag, "unstable": bool(s0.real > 0)}


def _floquet_point(p: PhysicalParams, seed: FloquetField | None):
    sol = solve_selfconsistent(p, seed=seed)
    f = sol.field
    row = {
        "is_lasing": sol.is_lasing,
        "abs_alpha1_sq": abs(f.alpha_p1) ** 2,
        "abs_alpha0_sq": abs(f.alpha_0) ** 2,
        "avg_intensity": sol.avg_intensity,
        "omega": sol.field.omega if sol.is_lasing else None,
    }
    return row, (f if sol.is_lasing else None)


def evaluate_point(task):
    """(params, point mode, continuation seed) -> (row dict, lasing field or None, error)."""
    p, point_mode, seed = task
    row: dict = {}
    field = None
    try:
        if point_mode in ("stability", "both"):
            row.update(_stability_point(p))
        if point_mode in ("floquet", "both"):
            frow, field = _floquet_point(p, seed)
            row.update(frow)
    except POINT_ERRORS as exc:
        return None, None, f"{type(exc).__name__}: {exc}"
    return row, field, None


def _failed_row(point_mode: str) -> dict:
    row = {}
    if point_mode in ("stability", "both"):
        row.update({"re_s0": NAN, "im_s0": NAN, "unstable": NAN})
    if point_mode in ("floquet", "both"):
        row.update({c: NAN for c in FLOQUET_COLUMNS})
    return row


class _Pool:
    """Order-preserving map, in process for one worker."""

    def __init__(self, workers: int):
        self.workers = workers
        self._ex = None

    def __enter__(self):
        if self.workers > 1:
            self._ex = ProcessPoolExecutor(self.workers, mp_context=multiprocessing.get_context("spawn"))
        return self

    def map(self, fn, items):
        if self._ex is None:
            return [fn(x) for x in items]
        return list(self._ex.map(fn, items))

    def __exit__(self, *exc):
        if self._ex is not None:
            self._ex.shutdown()


# ---------------------------------------------------------------------------
# Modes


def run_steady(cfg: RunConfig) -> Dataset:
    p = cfg.params
    sol = solve_nonlasing(p)
    if not sol.converged:
        raise SolverFailure(f"non-lasing solution did not converge (residual {sol.residual:.2e})")
    r = sol.rho_ss
    ds = Dataset("steady", ["re_alpha_ss", "im_alpha_ss", "abs_alpha_ss_sq", "rho_gg", "rho_ee", "rho_aa",
                            "re_rho_ge", "im_rho_ge", "residual"], meta=_report_meta(p))
    ds.add([sol.alpha_ss.real, sol.alpha_ss.imag, abs(sol.alpha_ss) ** 2, r[0, 0].real, r[1, 1].real,
            r[2, 2].real, r[0, 1].real, r[0, 1].imag, sol.residual])
    return ds


def run_stability(cfg: RunConfig) -> Dataset:
    p = cfg.params
    try:
        sol = solve_nonlasing(p)
        if not sol.converged:
            raise ConvergenceError(f"non-lasing residual {sol.residual:.2e}")
        res = find_primary_root(sol, p)
    except POINT_ERRORS as exc:
        raise SolverFailure(str(exc)) from exc
    meta = _report_meta(p)
    meta["roots"] = [[z.real, z.imag] for z in res.all_roots_found]
    ds = Dataset("stability", STABILITY_COLUMNS, meta=meta)
    ds.add([res.s0.real, res.s0.imag, res.lasing_unstable])
    return ds


def run_floquet(cfg: RunConfig) -> Dataset:
    p = cfg.params
    try:
        sol = solve_selfconsistent(p)
    except POINT_ERRORS as exc:
        raise SolverFailure(str(exc)) from exc
    f = sol.field
    meta = _report_meta(p)
    meta["start"] = sol.start
    ds = Dataset("floquet", FLOQUET_COLUMNS + ["re_alpha_m1", "im_alpha_m1", "re_alpha_0", "im_alpha_0",
                                               "alpha_1", "residual_F"], meta=meta)
    ds.add([sol.is_lasing, abs(f.alpha_p1) ** 2, abs(f.alpha_0) ** 2, sol.avg_intensity,
            f.omega if sol.is_lasing else None, f.alpha_m1.real, f.alpha_m1.imag,
            f.alpha_0.real, f.alpha_0.imag, f.alpha_p1.real, sol.residual])
    return ds


def _growth(p: PhysicalParams) -> float:
    return _stability_point(p)["re_s0"]


def run_threshold(cfg: RunConfig) -> Dataset:
    """Scan Re(s0) along axis1 and bisect every sign change."""
    ax = cfg.axis1
    p = cfg.params
    values = ax.values()
    tasks = [(p.replace(**{ax.name: v}), "stability", None) for v in values]
    with _Pool(cfg.workers) as pool:
        results = pool.map(evaluate_point, tasks)
    rates = []
    for v, (row, _, err) in zip(values, results):
        if err is not None:
            raise SolverFailure(f"{ax.name}={v:g}: {err}")
        rates.append(row["re_s0"])
    meta = _report_meta(p)
    meta["scan"] = [[v, r] for v, r in zip(values, rates)]
    ds = Dataset("threshold", ["parameter", "critical_value", "bracket_lo", "bracket_hi"], meta=meta)
    for k in range(len(values) - 1):
        if np.sign(rates[k]) != np.sign(rates[k + 1]):
            try:
                crit = threshold_bisect(p, ax.name, values[k], values[k + 1])
            except POINT_ERRORS as exc:
                raise SolverFailure(str(exc)) from exc
            ds.add([ax.name, crit, values[k], values[k + 1]])
    if not ds.rows:
        ds.add([ax.name, NAN, values[0], values[-1]])
    meta["crossings"] = sum(1 for r in ds.rows if not math.isnan(r[1]))
    return ds


def sweep_columns(point_mode: str) -> list[str]:
    cols = ["axis1", "axis2"]
    if point_mode in ("stability", "both"):
        cols += STABILITY_COLUMNS
    if point_mode in ("floquet", "both"):
        cols += FLOQUET_COLUMNS
    return cols


def run_sweep2d(cfg: RunConfig) -> Dataset:
    """Row-major grid over (axis1, axis2).

    Rows (fixed axis1 value) are evaluated one after another; the points of
    a row run in parallel. Floquet solves are seeded from the lasing field
    of the same axis2 column in the previous row, so results do not depend
    on the worker count.
    """
    a1, a2 = cfg.axis1, cfg.axis2
    mode = cfg.point_mode
    meta = _report_meta(cfg.params)
    meta.update({"axis1": a1.name, "axis2": a2.name, "point_mode": mode})
    ds = Dataset("sweep2d", sweep_columns(mode), meta=meta)
    prev_fields: list = [None] * a2.count
    failures = []
    with _Pool(cfg.workers) as pool:
        for v1 in a1.values():
            tasks = [(cfg.params.replace(**{a1.name: v1, a2.name: v2}), mode, prev_fields[j])
                     for j, v2 in enumerate(a2.values())]
            results = pool.map(evaluate_point, tasks)
            row_fields = []
            for j, (v2, (row, field, err)) in enumerate(zip(a2.values(), results)):
                if err is not None:
                    failures.append({"axis1": v1, "axis2": v2, "error": err})
                    row = _failed_row(mode)
                row = dict(row, axis1=v1, axis2=v2)
                ds.add(row)
                row_fields.append(field if field is not None else prev_fields[j])
            prev_fields = row_fields
    total = a1.count * a2.count
    meta["failed_points"] = failures
    if len(failures) > MAX_FAILED_FRACTION * total:
        raise SolverFailure(f"{len(failures)} of {total} grid points failed")
    return ds


def run_ramp(cfg: RunConfig) -> Dataset:
    """Hysteresis ramp of omega_p with the stability and Floquet overlays."""
    from .dynamics import IntegrationError, RampProtocol, run_hysteresis, seed_amplitude

    p = cfg.params
    rb = cfg.ramp
    rate, turn = rb.resolved()
    ramp = RampProtocol(rate, turn, "omega_p")
    seed = seed_amplitude(cfg.seed, rb.seed_amplitude)
    try:
        hyst = run_hysteresis(p, ramp, seed_alpha=seed, window=rb.window, grid_step=rb.grid_step)
    except IntegrationError as exc:
        raise SolverFailure(str(exc)) from exc

    # Overlays at every floquet_step in omega_p (on the hysteresis grid).
    grid = hyst.grid
    k = max(1, int(round(rb.floquet_step / rb.grid_step)))
    sample_idx = list(range(k - 1, len(grid), k))
    tasks = [(p.replace(omega_p=float(grid[i])), "both", None) for i in sample_idx]
    with _Pool(cfg.workers) as pool:
        results = pool.map(evaluate_point, tasks)
    re_s0 = np.full(len(grid), NAN)
    mffm = np.full(len(grid), NAN)
    failures = []
    for i, (row, _, err) in zip(sample_idx, results):
        if err is not None:
            failures.append({"omega_p": float(grid[i]), "error": err})
            continue
        re_s0[i] = row["re_s0"]
        mffm[i] = row["avg_intensity"]

    crossings = []
    valid = [i for i in sample_idx if np.isfinite(re_s0[i])]
    for i, j in zip(valid, valid[1:]):
        if np.sign(re_s0[i]) != np.sign(re_s0[j]):
            try:
                crossings.append(threshold_bisect(p, "omega_p", float(grid[i]), float(grid[j])))
            except POINT_ERRORS as exc:
                failures.append({"omega_p": float(grid[i]), "error": str(exc)})

    meta = _report_meta(p)
    meta.update({
        "ramp": {"rate": rate, "turn_time": turn, "peak": ramp.peak,
                 "seed_alpha": [seed.real, seed.imag], "window": hyst.window},
        "forward_onset": hyst.forward_onset(),
        "backward_extinction": hyst.backward_extinction(),
        "hysteresis_width": hyst.hysteresis_width(),
        "max_relative_gap": hyst.max_relative_gap(),
        "threshold_crossings": crossings,
        "failed_points": failures,
    })
    ds = Dataset("ramp", ["omega_p", "forward", "backward", "forward_oscillating", "backward_oscillating",
                          "re_s0", "floquet_intensity"], meta=meta)
    for row in zip(grid, hyst.forward, hyst.backward, hyst.forward_oscillating,
                   hyst.backward_oscillating, re_s0, mffm):
        ds.add(list(row))
    return ds


RUNNERS = {
    "steady": run_steady,
    "stability": run_stability,
    "threshold": run_threshold,
    "floquet": run_floquet,
    "ramp": run_ramp,
    "sweep2d": run_sweep2d,
}


def run(cfg: RunConfig) -> Dataset:
    return RUNNERS[cfg.mode](cfg)
