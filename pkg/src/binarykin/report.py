"""PNG figures for the CSV/JSON outputs (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .equilibrium import INVARIANT_NAMES  # noqa: E402

__all__ = ["plot_monitors", "plot_state", "plot_spectrum", "plot_decay", "plot_qtest"]

# no timestamps or version strings, so figures are reproducible byte for byte
_META = {"Software": None}


def _save(fig, path) -> Path:
    p = Path(path)
    fig.tight_layout()
    fig.savefig(p, dpi=100, metadata=_META)
    plt.close(fig)
    return p


def _positive(values) -> np.ndarray:
    a = np.abs(np.asarray(values, dtype=float))
    return np.where(a > 0, a, np.nan)


def plot_monitors(records, path) -> Path:
    t = np.array([r.t for r in records])
    cons = np.array([r.conservation for r in records])
    fig, ax = plt.subplots(2, 2, figsize=(10, 7))
    for j, name in enumerate(INVARIANT_NAMES):
        ax[0, 0].semilogy(t, _positive(cons[:, j] - cons[0, j]), label=name)
    ax[0, 0].set_title("conservation drift |c_j(t) - c_j(0)|")
    ax[0, 0].legend(fontsize=7)
    ax[0, 1].plot(t, [r.instantaneous_total for r in records], label="sum of squared norms")
    ax[0, 1].plot(t, [r.energy_E for r in records], label="energy E")
    ax[0, 1].set_title("norms")
    ax[0, 1].legend(fontsize=7)
    ax[1, 0].plot(t, [r.entropy_production for r in records])
    ax[1, 0].set_title("entropy production")
    num = np.array([r.coercivity_numerator for r in records])
    den = np.array([r.coercivity_denominator for r in records])
    with np.errstate(divide="ignore", invalid="ignore"):
        ax[1, 1].plot(t, np.where(den > 0, num / den, np.nan))
    ax[1, 1].set_title("<L df, df> / |df|_nu^2")
    for a in ax.flat:
        a.set_xlabel("t")
    return _save(fig, path)


def plot_state(f, path) -> Path:
    """Velocity marginal at the first x node and the x-profile of species mass."""
    vg = f.vgrid
    n = vg.n
    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    for s, name in enumerate(("A", "B")):
        cube = f.data[s, 0].reshape(n, n, n)
        ax[0].plot(vg.axis, cube.sum(axis=(1, 2)) * vg.spacing ** 2, marker="o", label=f"f{name}")
        ax[1].plot(np.arange(f.xgrid.size), f.data[s] @ vg.weights, marker=".", label=f"f{name}")
    ax[0].set_xlabel("vx")
    ax[0].set_title("vx marginal at x index 0")
    ax[1].set_xlabel("x index")
    ax[1].set_title("species mass density")
    ax[0].legend()
    ax[1].legend()
    return _save(fig, path)


def plot_spectrum(eigenvalues, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ev = np.asarray(eigenvalues, dtype=float)
    ax.plot(np.arange(ev.size), ev, ".")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.set_title("deflated spectrum in the nu-weighted norm")
    return _save(fig, path)


def plot_decay(rows, path) -> Path:
    arr = np.asarray(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(arr[:, 0], arr[:, 2], "o-")
    ax.set_xlabel("|v|")
    ax.set_ylabel("I(v) (1+|v|)^(2-gamma)")
    return _save(fig, path)


def plot_qtest(rows, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for check in dict.fromkeys(r[0] for r in rows):
        sel = [r for r in rows if r[0] == check]
        ax.semilogy([r[1] for r in sel], _positive([r[3] for r in sel]), "o-", label=check)
    ax.set_xlabel("points per axis")
    ax.set_ylabel("max |residual|")
    ax.legend()
    return _save(fig, path)
