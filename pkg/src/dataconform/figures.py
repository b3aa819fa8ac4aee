"""Matplotlib rendering of campaign and figure-data outputs.

Figures are rendered straight to files next to the CSV/JSON artifacts; the
CSVs remain the machine-readable contract and carry the same data.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _grid(n):
    cols = 2 if n > 1 else 1
    rows = (n + cols - 1) // cols
    return rows, cols


def render_state_scatter(experiment, panels, path, dpi=150):
    """One panel per design: experiment states (squares) vs design states (crosses).

    experiment: TrajectoryData of the excitation run; panels: list of
    (label, TrajectoryData) from the designed closed loops.
    """
    rows, cols = _grid(len(panels))
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 3.6 * rows), squeeze=False)
    for ax, (label, traj) in zip(axes.ravel(), panels):
        ax.scatter(traj.X[0], traj.X[1], s=6, marker="x", color="tab:blue",
                   alpha=0.6, label="designed law")
        ax.scatter(experiment.X[0], experiment.X[1], s=6, marker="s",
                   color="tab:orange", alpha=0.5, label="experiment")
        ax.set_title(label)
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize=8)
    for ax in axes.ravel()[len(panels):]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def render_x1_series(experiment, panels, path, dpi=150):
    """Stacked x1 time series: the excitation run followed by each designed law."""
    n = len(panels) + 1
    fig, axes = plt.subplots(n, 1, figsize=(7.0, 1.9 * n), sharex=False, squeeze=False)
    axes = axes.ravel()
    axes[0].plot(np.arange(experiment.N + 1), experiment.X[0], lw=0.7, color="tab:orange")
    axes[0].set_ylabel("$x_1$")
    axes[0].set_title("experiment")
    axes[0].grid(True, alpha=0.3)
    offset = experiment.N + 1
    for ax, (label, traj) in zip(axes[1:], panels):
        ax.plot(offset + np.arange(traj.N + 1), traj.X[0], lw=0.7, color="tab:blue")
        ax.set_ylabel("$x_1$")
        ax.set_title(label)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("time step $k$")
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def render_stability_bars(report, path, dpi=150):
    """Per-design stable percentage bars for a campaign report."""
    labels = [d.label for d in report.designs]
    values = [d.percent_stable for d in report.designs]
    fig, ax = plt.subplots(figsize=(1.6 * max(4, len(labels)), 3.6))
    bars = ax.bar(labels, values, color="tab:blue", width=0.6)
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, value + 1.0, f"{value:.1f}%",
                ha="center", fontsize=9)
    ax.set_ylim(0, 105)
    ax.set_ylabel("stable simulations [%]")
    ax.set_title(f"stability over {report.repetitions} repetitions")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
