"""Run configuration: a flat ``key = value`` document with optional sections.

Example::

    mode = sweep2d
    seed = 7

    [physics]
    delta_p = 10
    omega_p = 15

    [sweep]
    axis1 = n_atoms
    axis1_lo = 2000
    axis1_hi = 20000
    axis1_count = 10
    axis2 = delta_p
    axis2_lo = -20
    axis2_hi = 40
    axis2_count = 13
    point_mode = both

Keys before the first section header belong to ``[run]``. Physics keys are
the ``PhysicalParams`` field names; unspecified ones take the defaults.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

from .model import PARAM_NAMES, PhysicalParams

MODES = ("steady", "stability", "threshold", "floquet", "ramp", "sweep2d")
POINT_MODES = ("stability", "floquet", "both")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        if self.name not in PARAM_NAMES:
            raise ConfigError(f"sweep axis {self.name!r} is not a physics parameter")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigError(f"axis {self.name}: bounds must be finite")
        # A single point is allowed only as a degenerate sweep with lo == hi.
        if self.count < 2 and not (self.count == 1 and self.lo == self.hi):
            raise ConfigError(f"axis {self.name}: count must be >= 2 (or 1 with lo == hi)")

    def values(self) -> list[float]:
        if self.count == 1:
            return [float(self.lo)]
        step = (self.hi - self.lo) / (self.count - 1)
        return [float(self.lo + k * step) if k < self.count - 1 else float(self.hi)
                for k in range(self.count)]


@dataclass(frozen=True)
class RampBlock:
    """Triangular ramp of omega_p: any two of rate, turn_time and peak."""

    rate: float | None = None
    turn_time: float | None = None
    peak: float | None = None
    seed_amplitude: float = 1e-3
    grid_step: float = 0.1
    floquet_step: float = 1.0
    window: float | None = None

    def resolved(self) -> tuple[float, float]:
        """(rate, turn_time) with A * T = peak."""
        rate, turn, peak = self.rate, self.turn_time, self.peak
        given = sum(v is not None for v in (rate, turn, peak))
        if given < 2:
            raise ConfigError("ramp needs two of rate, turn_time, peak")
        if turn is not None and turn <= 0:
            raise ConfigError("ramp turn_time must be > 0")
        if rate is not None and rate <= 0:
            raise ConfigError("ramp rate must be > 0")
        if peak is not None and peak <= 0:
            raise ConfigError("ramp peak must be > 0")
        if given == 3:
            # Published rates are rounded; accept 2% and let peak and T win.
            if abs(rate * turn - peak) > 0.02 * peak:
                raise ConfigError(f"ramp rate * turn_time = {rate * turn:g} does not match peak {peak:g}")
            return peak / turn, turn
        if turn is None:
            return rate, peak / rate
        if rate is None:
            return peak / turn, turn
        return rate, turn


@dataclass(frozen=True)
class RunConfig:
    mode: str
    params: PhysicalParams = field(default_factory=PhysicalParams)
    axis1: Axis | None = None
    axis2: Axis | None = None
    point_mode: str = "stability"
    ramp: RampBlock | None = None
    output: str | None = None
    format: str = "csv"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.point_mode not in POINT_MODES:
            raise ConfigError(f"point_mode must be one of {', '.join(POINT_MODES)}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.mode == "sweep2d" and (self.axis1 is None or self.axis2 is None):
            raise ConfigError("sweep2d needs axis1 and axis2")
        if self.mode == "threshold" and self.axis1 is None:
            raise ConfigError("threshold needs axis1")
        if self.mode == "ramp":
            if self.ramp is None:
                raise ConfigError("ramp mode needs a [ramp] section")
            self.ramp.resolved()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_RUN_KEYS = {"mode": str, "output": str, "format": str, "seed": int, "workers": int}
_SWEEP_KEYS = {"point_mode": str}
for _k in ("axis1", "axis2"):
    _SWEEP_KEYS.update({_k: str, f"{_k}_lo": float, f"{_k}_hi": float, f"{_k}_count": int})
_RAMP_KEYS = {f.name: float for f in dataclasses.fields(RampBlock)}
_SECTIONS = {
    "run": _RUN_KEYS,
    "physics": {name: float for name in PARAM_NAMES},
    "sweep": _SWEEP_KEYS,
    "ramp": _RAMP_KEYS,
}


def _convert(section: str, key: str, raw: str, lineno: int):
    kind = _SECTIONS[section][key]
    try:
        if kind is int:
            v = float(raw)
            if not v.is_integer():
                raise ValueError
            return int(v)
        if kind is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(f"line {lineno}: {section}.{key} expects {kind.__name__}, got {raw!r}") from None
    return raw


def read_document(text: str) -> dict:
    """Parse into {section: {key: value}} with typed values."""
    doc: dict = {s: {} for s in _SECTIONS}
    section = "run"
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _SECTIONS[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in doc[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        doc[section][key] = _convert(section, key, raw, lineno)
    return doc


def _axis(sweep: dict, name: str) -> Axis | None:
    keys = [name, f"{name}_lo", f"{name}_hi", f"{name}_count"]
    present = [k for k in keys if k in sweep]
    if not present:
        return None
    missing = [k for k in keys if k not in sweep]
    if missing:
        raise ConfigError(f"incomplete sweep axis, missing {', '.join(missing)}")
    return Axis(sweep[name], sweep[f"{name}_lo"], sweep[f"{name}_hi"], sweep[f"{name}_count"])


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Validated RunConfig. ``mode`` (from the command line) fills in or must match."""
    doc = read_document(text)
    run = doc["run"]
    cfg_mode = run.get("mode")
    if cfg_mode is None and mode is None:
        raise ConfigError("missing mode")
    if cfg_mode is not None and mode is not None and cfg_mode != mode:
        raise ConfigError(f"config mode {cfg_mode!r} conflicts with requested mode {mode!r}")
    try:
        params = PhysicalParams(**doc["physics"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ramp = RampBlock(**doc["ramp"]) if doc["ramp"] else None
    return RunConfig(
        mode=cfg_mode or mode,
        params=params,
        axis1=_axis(doc["sweep"], "axis1"),
        axis2=_axis(doc["sweep"], "axis2"),
        point_mode=doc["sweep"].get("point_mode", "stability"),
        ramp=ramp,
        output=run.get("output"),
        format=run.get("format", "csv"),
        seed=run.get("seed", 0),
        workers=run.get("workers", 1),
    )


def load_config(path, mode: str | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), mode)


def _num(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def dump_config(cfg: RunConfig) -> str:
    """Canonical text that parses back to an equal RunConfig."""
    lines = [f"mode = {cfg.mode}", f"format = {cfg.format}", f"seed = {cfg.seed}",
             f"workers = {cfg.workers}"]
    if cfg.output is not None:
        lines.append(f"output = {cfg.output}")
    lines += ["", "[physics]"]
    lines += [f"{k} = {_num(v)}" for k, v in cfg.params.as_dict().items()]
    lines += ["", "[sweep]", f"point_mode = {cfg.point_mode}"]
    for name in ("axis1", "axis2"):
        ax = getattr(cfg, name)
        if ax is not None:
            lines += [f"{name} = {ax.name}", f"{name}_lo = {_num(ax.lo)}",
                      f"{name}_hi = {_num(ax.hi)}", f"{name}_count = {ax.count}"]
    if cfg.ramp is not None:
        lines += ["", "[ramp]"]
        for f in dataclasses.fields(RampBlock):
            v = getattr(cfg.ramp, f.name)
            if v is not None:
                lines.append(f"{f.name} = {_num(v)}")
    return "\n".join(lines) + "\n"
