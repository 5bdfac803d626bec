"""Figure rendering for benchmark and sweep reports.

Every report-producing CLI path writes a delimited file and, next to it, a
matplotlib figure.  Plotting is isolated here so library users who only want
the numbers never import matplotlib.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SOLVER_STYLE = {
    "fista": dict(color="tab:blue", marker="o"),
    "admm": dict(color="tab:orange", marker="s"),
    "lin-admm": dict(color="tab:green", marker="^"),
    "sg": dict(color="tab:red", marker="x"),
}


def plot_bench(curves: dict[str, tuple[np.ndarray, np.ndarray]],
               optimum: float, path: str, title: str = "") -> str:
    """Distance to the best certified objective versus wall-clock time.

    ``curves`` maps a solver name to (seconds, objective) arrays.  Log-log
    axes; distances are floored at 1e-12 to keep the log scale finite.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name, (secs, objs) in curves.items():
        dist = np.maximum(np.asarray(objs) - optimum, 1e-12)
        style = _SOLVER_STYLE.get(name, {})
        ax.loglog(np.maximum(secs, 1e-6), dist, label=name, markersize=3,
                  linewidth=1.2, **style)
    ax.set_xlabel("CPU time (s)")
    ax.set_ylabel("objective - best")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_cur_grid(records: list[dict], path: str, title: str = "") -> str:
    """Explained variance against the number of selected rows + columns."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    sizes = np.array([r["n_rows"] + r["n_cols"] for r in records])
    var = np.array([r["variance"] for r in records])
    order = np.argsort(sizes)
    ax.plot(sizes[order], var[order], "o-", color="tab:blue", markersize=4,
            linewidth=1.0)
    ax.set_xlabel("selected rows + columns")
    ax.set_ylabel("explained variance (after refit)")
    ax.set_ylim(-0.05, 1.05)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
