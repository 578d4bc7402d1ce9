"""Figures rendered from the CSV tables the commands write.

Every function takes CSV paths, never in-memory results, so a plot always
shows exactly what is on disk.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .scenario_io import read_grid, read_table  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_grid(csv_path, png_path, title: str, cmap: str = "viridis", label: str = "") -> Path:
    grid = read_grid(csv_path)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(grid, cmap=cmap, origin="upper")
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label=label)
    return _save(fig, png_path)


def plot_convergence(csv_path, png_path) -> Path:
    _, rows = read_table(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    methods = []
    for r in rows:
        if r[0] not in methods:
            methods.append(r[0])
    for m in methods:
        it = np.array([int(r[1]) for r in rows if r[0] == m])
        y = np.array([float(r[2]) for r in rows if r[0] == m])
        ax.plot(it, y, label=m)
    ax.set_xlabel("iteration")
    ax.set_ylabel("cumulative minimum SI [dB, relative]")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, png_path)


def plot_trace(csv_path, png_path) -> Path:
    """Single optimization run: every measurement and its running minimum."""
    _, rows = read_table(csv_path)
    it = np.array([int(r[0]) for r in rows])
    meas = np.array([float(r[1]) for r in rows])
    cm = np.array([float(r[2]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(it, meas, ".", ms=2, alpha=0.4, label="measured")
    ax.plot(it, cm, label="cumulative minimum")
    ax.set_xlabel("iteration")
    ax.set_ylabel("SI [dB, relative]")
    ax.legend()
    return _save(fig, png_path)


def plot_breath(csv_path, png_path) -> Path:
    _, rows = read_table(csv_path)
    t = np.array([float(r[0]) for r in rows])
    raw = np.array([float(r[1]) for r in rows])
    filt = np.array([float(r[2]) for r in rows])
    gt = np.array([float(r[3]) for r in rows])
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    a1.plot(t, raw - raw.mean(), lw=0.6, alpha=0.5, label="unwrapped phase")
    a1.plot(t, filt, lw=1.2, label="filtered phase")
    a1.set_ylabel("phase [deg]")
    a1.legend(loc="upper right")
    if np.any(np.isfinite(gt)):
        a2.plot(t, gt, color="k", lw=1.0)
    a2.set_ylabel("ground truth [norm.]")
    a2.set_xlabel("time [s]")
    return _save(fig, png_path)


def plot_impairments(csv_path, out_dir) -> list[Path]:
    _, rows = read_table(csv_path)
    out = []
    for mode in sorted({r[0] for r in rows}):
        ph = np.array([float(r[3]) for r in rows if r[0] == mode])
        fig = plt.figure(figsize=(4.5, 4.5))
        ax = fig.add_subplot(projection="polar")
        ax.scatter(ph, np.ones_like(ph), s=3, alpha=0.3)
        ax.set_rticks([])
        ax.set_title(f"subcarrier phase, {mode}")
        out.append(_save(fig, Path(out_dir) / f"polar_{mode}.png"))
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.hist(np.degrees(ph), bins=72, range=(-180, 180))
        ax.set_xlabel("phase [deg]")
        ax.set_ylabel("packets")
        ax.set_title(mode)
        out.append(_save(fig, Path(out_dir) / f"histogram_{mode}.png"))
    return out
