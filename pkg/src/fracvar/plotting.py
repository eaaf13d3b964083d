"""Figures written next to the CSV outputs of the command line tool."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# PNG metadata would otherwise carry the matplotlib version string
_PNG_METADATA = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def solution_figure(x: np.ndarray, y_num: np.ndarray, y_exact: np.ndarray | None, path: Path,
                    title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y_num, label="numerical", lw=1.5)
    if y_exact is not None:
        ax.plot(x, y_exact, "--", label="analytic", lw=1.5)
    ax.set_xlabel("x")
    ax.set_ylabel("y(x)")
    ax.set_title(title)
    ax.legend()
    return _save(fig, Path(path))


def residual_figure(x: np.ndarray, residual: np.ndarray, margin: int, path: Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    sl = slice(margin, x.size - margin)
    ax.plot(x[sl], residual[sl], lw=1.0)
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("x")
    ax.set_ylabel("residual")
    ax.set_title(title)
    return _save(fig, Path(path))


PLOT_SCRIPT = '''\
"""Overlay the numerical and analytic trajectories from trajectory.csv.

Usage: python plot_solution.py [trajectory.csv] [output.png]
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "trajectory.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "solution_replot.png"
with open(src, newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["x"]) for r in rows]
plt.plot(x, [float(r["y_numeric"]) for r in rows], label="numerical")
if rows and "y_exact" in rows[0]:
    plt.plot(x, [float(r["y_exact"]) for r in rows], "--", label="analytic")
plt.xlabel("x")
plt.ylabel("y(x)")
plt.title({title!r})
plt.legend()
plt.savefig(dst, dpi=120)
'''


def plot_script(title: str) -> str:
    return PLOT_SCRIPT.replace("{title!r}", repr(title))
