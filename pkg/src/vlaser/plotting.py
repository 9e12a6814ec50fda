"""Optional PNG figures written next to a run's tabular output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .output import Dataset  # noqa: E402

_LABELS = {
    "n_atoms": r"$N$",
    "delta_p": r"$\Delta_p/\gamma_e$",
    "omega_p": r"$\Omega_p/\gamma_e$",
    "delta_c": r"$\Delta_c/\gamma_e$",
    "kappa": r"$\kappa/\gamma_e$",
}


def _label(name: str) -> str:
    return _LABELS.get(name, name)


def _as_float(values) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in values])


def _heatmap(ds: Dataset, column: str, title: str, path: Path, cmap="viridis", log=False, symmetric=False):
    x1 = _as_float(ds.column("axis1"))
    x2 = _as_float(ds.column("axis2"))
    z = _as_float(ds.column(column))
    u1, u2 = np.unique(x1), np.unique(x2)
    grid = z.reshape(len(u1), len(u2))
    if log:
        grid = np.log10(np.where(grid > 0, grid, np.nan))
    fig, ax = plt.subplots(figsize=(5.0, 3.8), constrained_layout=True)
    kw = {}
    if symmetric:
        lim = np.nanmax(np.abs(grid)) if np.isfinite(grid).any() else 1.0
        kw = {"vmin": -lim, "vmax": lim}
    mesh = ax.pcolormesh(u2, u1, grid, cmap=cmap, shading="nearest", **kw)
    fig.colorbar(mesh, ax=ax, label=title)
    ax.set_xlabel(_label(ds.meta.get("axis2", "axis2")))
    ax.set_ylabel(_label(ds.meta.get("axis1", "axis1")))
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(ds: Dataset, stem: Path) -> list[Path]:
    out = []
    if "re_s0" in ds.columns:
        out.append(_heatmap(ds, "re_s0", r"Re$(s_0)/\gamma_e$", stem.with_name(stem.name + "_re_s0.png"),
                            cmap="RdBu_r", symmetric=True))
        out.append(_heatmap(ds, "im_s0", r"Im$(s_0)/\gamma_e$", stem.with_name(stem.name + "_im_s0.png")))
    if "avg_intensity" in ds.columns:
        out.append(_heatmap(ds, "avg_intensity", r"$\log_{10}|\alpha|^2_{av}$",
                            stem.with_name(stem.name + "_intensity.png"), log=True))
    return out


def plot_ramp(ds: Dataset, stem: Path) -> list[Path]:
    x = _as_float(ds.column("omega_p"))
    fig, ax = plt.subplots(figsize=(5.0, 3.5), constrained_layout=True)
    ax.plot(x, _as_float(ds.column("forward")), label="ramp up")
    ax.plot(x, _as_float(ds.column("backward")), "--", label="ramp down")
    mffm = _as_float(ds.column("floquet_intensity"))
    ok = np.isfinite(mffm)
    ax.plot(x[ok], mffm[ok], ":o", ms=3, label="Floquet")
    for c in ds.meta.get("threshold_crossings", []):
        ax.axvline(c, color="r", ls="--", lw=0.8)
    ax.set_xlabel(_label("omega_p"))
    ax.set_ylabel(r"$|\alpha|^2$")
    ax.legend(frameon=False)
    path = stem.with_name(stem.name + "_hysteresis.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def plot_dataset(ds: Dataset, out_path) -> list[Path]:
    """Render the figures for ``ds`` beside ``out_path``; returns the files written."""
    stem = Path(out_path).with_suffix("")
    if ds.kind == "sweep2d":
        return plot_sweep(ds, stem)
    if ds.kind == "ramp":
        return plot_ramp(ds, stem)
    return []
