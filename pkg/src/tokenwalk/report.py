"""Figure rendering for the CLI report path.

Each figure is written next to its CSV so a run leaves both the raw
delimited data and a quick visual. Rendering is strictly optional
downstream of the numerics; nothing here feeds back into results.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import FitResult, MseSeries


def save_mse_figure(series_by_label: dict[str, MseSeries], path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for label, series in series_by_label.items():
        ax.loglog(series.indices, series.mean, label=label)
        lo = np.maximum(series.mean - series.stderr, 1e-300)
        ax.fill_between(series.indices, lo, series.mean + series.stderr,
                        alpha=0.25, linewidth=0)
    ax.set_xlabel("step n")
    ax.set_ylabel("mean squared error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_theory_figure(rows: list[tuple], path) -> None:
    """Rows of (alpha, case, trace_v_x, trace_v_theta, gap)."""
    alphas = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(alphas, [r[2] for r in rows], "o-", label="trace v_x")
    ax.plot(alphas, [r[3] for r in rows], "s-", label="trace v_theta")
    ax.set_xlabel("alpha")
    ax.set_ylabel("trace of limiting covariance")
    if min(alphas) >= 0 and all(r[2] > 0 and r[3] > 0 for r in rows):
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_fit_figure(alphas: np.ndarray, values: np.ndarray, fit: FitResult,
                    path) -> None:
    grid = np.linspace(float(np.min(alphas)), float(np.max(alphas)), 256)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(alphas, values, "ko", label="data")
    ax.plot(grid, fit.predict(grid), "r-",
            label=f"c1/(x+c2)^2+c3, rss={fit.rss:.3g}")
    ax.set_xlabel("alpha")
    ax.set_ylabel("value")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
