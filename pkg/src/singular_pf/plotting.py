"""Matplotlib renderings of rate tables, energy ledgers and fields (file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps in the files, so reruns reproduce them
_META = {".svg": {"Date": None}, ".png": {"Software": None}, ".pdf": {"CreationDate": None}}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".svg":
        matplotlib.rcParams["svg.hashsalt"] = "singular-pf"
    fig.savefig(path, metadata=_META.get(path.suffix, {}), bbox_inches="tight")
    plt.close(fig)
    return path


def rate_plot(rows, x, ys, path, title=None):
    """Log-log plot of columns ``ys`` against ``x`` from a list of row dicts."""
    fig, ax = plt.subplots(figsize=(5, 4))
    xv = np.array([float(r[x]) for r in rows])
    for y in ys:
        yv = np.array([float(r[y]) if r.get(y) not in ("", None) else np.nan for r in rows])
        ok = np.isfinite(yv) & (yv > 0) & np.isfinite(xv) & (xv > 0)
        ax.loglog(xv[ok], yv[ok], "o-", label=y)
    ax.set_xlabel(x)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    return _save(fig, path)


def ledger_plot(led, path, keys=("free_energy", "dissipation_grad_mu", "dissipation_phi_t", "residual_phase")):
    fig, ax = plt.subplots(figsize=(5, 4))
    for k in keys:
        ax.plot(led["time"], led[k], label=k)
    ax.set_xlabel("t")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    return _save(fig, path)


def field_plot(grid, values, path, title=None):
    if grid.dim != 2:
        raise ValueError("field plots are 2D only")
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(np.asarray(values).reshape(grid.shape).T, origin="lower",
                   extent=(0, grid.extent[0], 0, grid.extent[1]), cmap="viridis")
    fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    return _save(fig, path)
