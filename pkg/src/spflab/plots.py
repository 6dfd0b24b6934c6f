"""Matplotlib figure emission for the command-line reports.

CSV stays the canonical output; figures are rendered to SVG next to it.
Figures are deterministic: the SVG hash salt is fixed per run and the date
metadata is stripped, so identical runs produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_figure(fig, path: str | Path, salt: str) -> None:
    with matplotlib.rc_context({"svg.hashsalt": salt}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def smooth(values: np.ndarray, window: int) -> np.ndarray:
    if window <= 1 or values.size < 2:
        return values
    kernel = np.ones(window) / window
    padded = np.concatenate([np.repeat(values[0], window - 1), values])
    return np.convolve(padded, kernel, mode="valid")


def evolution_figure(evolution: np.ndarray, path: Path, salt: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for s in range(evolution.shape[1]):
        ax.plot(evolution[:, s], lw=1.0, label=f"state {s}")
    ax.set_xlabel("step")
    ax.set_ylabel("probability")
    ax.set_title("distribution evolution")
    if evolution.shape[1] <= 10:
        ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, path, salt)


def spectrum_figure(omegas: np.ndarray, magnitudes: np.ndarray, path: Path, salt: str) -> None:
    """Per-(state, action) spectrum magnitudes; magnitudes indexed (pair, bin)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for row in magnitudes:
        ax.plot(omegas, row, lw=1.0, alpha=0.8)
    ax.set_xlabel("frequency (rad)")
    ax.set_ylabel("row norm")
    ax.set_title("solved spectrum field")
    fig.tight_layout()
    save_figure(fig, path, salt)


def bounds_figure(rows: list[dict], path: Path, salt: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = np.arange(len(rows))
    lhs = np.array([r["lhs"] for r in rows])
    rhs = np.array([r["rhs"] for r in rows])
    ax.scatter(xs, lhs, s=12, label="|J1 - J2|")
    ax.scatter(xs, rhs, s=12, marker="x", label="bound")
    ax.set_yscale("log")
    ax.set_xlabel("instance")
    ax.set_ylabel("value")
    ax.set_title("performance-difference bounds")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, path, salt)


def learning_curve_figure(rows: list[dict], path: Path, salt: str,
                          smooth_window: int) -> None:
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    steps = np.array([r["step"] for r in rows], dtype=float)
    losses = np.array([r["L_pred"] for r in rows], dtype=float)
    keep = ~np.isnan(losses)
    if keep.any():
        axes[0].plot(steps[keep], smooth(losses[keep], smooth_window), lw=1.2)
    axes[0].set_ylabel("prediction loss")
    eval_pts = [(r["step"], r["episodic_return"]) for r in rows
                if r["episodic_return"] is not None]
    if eval_pts:
        xs, ys = zip(*eval_pts)
        axes[1].plot(xs, ys, marker="o", ms=3, lw=1.0)
    axes[1].set_ylabel("episodic return")
    axes[1].set_xlabel("environment step")
    fig.tight_layout()
    save_figure(fig, path, salt)


def recovery_figure(true_states: np.ndarray, recovered: dict[int, np.ndarray],
                    path: Path, salt: str) -> None:
    """True scalar trace in blue; k-step recoveries in reds fading with k."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(true_states, color="tab:blue", lw=1.6, label="true")
    ks = sorted(recovered)
    for i, k in enumerate(ks):
        shade = 0.85 - 0.6 * (i / max(1, len(ks) - 1))
        ax.plot(recovered[k], color=(1.0, shade * 0.5, shade * 0.5), lw=1.0,
                label=f"k={k}")
    ax.set_xlabel("time step")
    ax.set_ylabel("state value")
    ax.set_title("recovered state sequences")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, path, salt)
