"""Static figures for comparison results.

Uses matplotlib's object API (``Figure`` plus ``savefig``) so no GUI backend
is touched; files are written next to the CSV output.
"""

from __future__ import annotations

import os

import numpy as np
from matplotlib.figure import Figure

from .harness import ComparisonResult

STYLE = {"PRI": ("C0", "o"), "THR": ("C1", "s"), "U-R": ("C2", "^"), "W+R": ("C3", "v")}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}


def _new(ncols: int = 1) -> tuple[Figure, list]:
    fig = Figure(figsize=(3.4 * ncols, 2.8), layout="constrained")
    axes = fig.subplots(1, ncols, squeeze=False)[0]
    return fig, list(axes)


def _series(pairs: dict) -> tuple[list, list]:
    ks = sorted(pairs)
    return ks, [float(np.median(pairs[k])) for k in ks]


def _plot(ax, scheme: str, ks, ys) -> None:
    color, marker = STYLE.get(scheme, ("k", "."))
    ax.plot(ks, ys, color=color, marker=marker, ms=3, lw=1, label=scheme)


def subset_error_figure(res: ComparisonResult, subset: str, path: str) -> str:
    fig, (ax,) = _new()
    by: dict = {}
    for r in res.rows:
        if r.subset == subset:
            by.setdefault(r.scheme, {}).setdefault(r.k, []).append(abs(r.rel_error))
    for scheme, pairs in by.items():
        ks, ys = _series(pairs)
        _plot(ax, scheme, ks, np.maximum(ys, 1e-9))
    ax.set_yscale("log")
    ax.set_xlabel("sample size k")
    ax.set_ylabel("median |relative error|")
    ax.set_title(subset)
    ax.legend(frameon=False)
    fig.savefig(path, dpi=150)
    return path


def matrix_error_figure(res: ComparisonResult, path: str) -> str:
    fig, (ax,) = _new()
    by: dict = {}
    for r in res.matrix:
        by.setdefault(r.scheme, {}).setdefault(r.k, []).append(r.error)
    for scheme, pairs in by.items():
        ks, ys = _series(pairs)
        _plot(ax, scheme, ks, np.maximum(ys, 1e-9))
    ax.set_yscale("log")
    ax.set_xlabel("sample size k")
    ax.set_ylabel("sum |error| / total")
    ax.set_title("traffic matrix")
    ax.legend(frameon=False)
    fig.savefig(path, dpi=150)
    return path


def distinct_figure(res: ComparisonResult, path: str) -> str:
    fig, (ax,) = _new()
    by: dict = {}
    for r in res.distinct:
        by.setdefault(r.scheme, {}).setdefault(r.k, []).append(r.percent)
    for scheme, pairs in by.items():
        ks, ys = _series(pairs)
        _plot(ax, scheme, ks, ys)
    ax.set_xlabel("sample size k")
    ax.set_ylabel("distinct samples (% of k)")
    ax.legend(frameon=False)
    fig.savefig(path, dpi=150)
    return path


def write_figures(res: ComparisonResult, out_dir: str) -> list[str]:
    """Render every figure the result supports; returns the written paths."""
    import matplotlib

    written = []
    with matplotlib.rc_context(RC):
        for subset in sorted({r.subset for r in res.rows}):
            safe = subset.replace("=", "_").replace("/", "_")
            written.append(subset_error_figure(res, subset, os.path.join(out_dir, f"error_{safe}.png")))
        if res.matrix:
            written.append(matrix_error_figure(res, os.path.join(out_dir, "matrix_error.png")))
        if res.distinct:
            written.append(distinct_figure(res, os.path.join(out_dir, "distinct.png")))
    return written
