"""Figure rendering for CLI outputs (Agg backend, PNG files next to CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import ErrorReport  # noqa: E402
from .reference import GridSolution  # noqa: E402


def _heatmap_1d(ax, sol: GridSolution, field: np.ndarray, label: str):
    extent = [sol.times[0], sol.times[-1], sol.x[0], sol.x[-1]]
    im = ax.imshow(field.T, origin="lower", aspect="auto", extent=extent,
                   cmap="viridis")
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    ax.set_title(label)
    return im


def solution_figure(sol: GridSolution, path, title: str = "") -> None:
    """1D: x-t heatmaps per species; 2D: one row of snapshots per species."""
    if sol.dim == 1:
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for ax, field, name in zip(axes, (sol.c_a, sol.c_s), ("c_A", "c_S")):
            im = _heatmap_1d(ax, sol, field, name)
            fig.colorbar(im, ax=ax)
    else:
        n_t = len(sol.times)
        fig, axes = plt.subplots(2, n_t, figsize=(3 * n_t, 6), squeeze=False)
        for row, (field, name) in enumerate(((sol.c_a, "c_A"), (sol.c_s, "c_S"))):
            for col, t in enumerate(sol.times):
                ax = axes[row][col]
                im = ax.imshow(field[col].T, origin="lower",
                               extent=[sol.x[0], sol.x[-1], sol.y[0], sol.y[-1]],
                               cmap="viridis")
                ax.set_title(f"{name}, t={t:g}")
                fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def error_figure(pred: GridSolution, report: ErrorReport, path) -> None:
    """Absolute-error fields between prediction and reference."""
    if pred.dim == 1:
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for ax, err, name in zip(axes, (report.a.abs_error, report.s.abs_error),
                                 ("|error| A", "|error| S")):
            im = _heatmap_1d(ax, pred, err, name)
            fig.colorbar(im, ax=ax)
    else:
        n_t = len(pred.times)
        fig, axes = plt.subplots(2, n_t, figsize=(3 * n_t, 6), squeeze=False)
        fields = ((report.a.abs_error, "|error| A"), (report.s.abs_error, "|error| S"))
        for row, (field, name) in enumerate(fields):
            for col, t in enumerate(pred.times):
                ax = axes[row][col]
                im = ax.imshow(field[col].T, origin="lower",
                               extent=[pred.x[0], pred.x[-1],
                                       pred.y[0], pred.y[-1]],
                               cmap="magma")
                ax.set_title(f"{name}, t={t:g}")
                fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def training_curves(history_rows: list[dict], path, title: str = "") -> None:
    epochs = [r["epoch"] for r in history_rows]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for key in ("total", "l_pde", "l_bc", "l_ic"):
        vals = np.array([r[key] for r in history_rows], dtype=float)
        axes[0].semilogy(epochs, np.maximum(vals, 1e-300), label=key)
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("loss")
    axes[0].legend()
    axes[0].set_title("loss components")
    for key in ("l_A", "l_S", "mse_A", "mse_S"):
        vals = np.array([r[key] for r in history_rows], dtype=float)
        if np.all(np.isnan(vals)):
            continue
        axes[1].semilogy(epochs, np.maximum(vals, 1e-300), label=key)
    axes[1].set_xlabel("epoch")
    axes[1].legend()
    axes[1].set_title("per-species loss and MSE")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def metrics_bars(rows: list[tuple[str, str, str, float]], path) -> None:
    """Bar chart per metric: rows are (variant, species, metric, value)."""
    metrics_names = sorted({r[2] for r in rows})
    fig, axes = plt.subplots(1, len(metrics_names),
                             figsize=(4 * len(metrics_names), 4), squeeze=False)
    for ax, metric in zip(axes[0], metrics_names):
        sub = [r for r in rows if r[2] == metric]
        labels = [f"{v}\n{s}" for v, s, _, _ in sub]
        vals = [max(r[3], 1e-300) if np.isfinite(r[3]) else np.nan for r in sub]
        ax.bar(range(len(sub)), vals)
        ax.set_xticks(range(len(sub)))
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_yscale("log")
        ax.set_title(metric)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def sweep_figure(rows: list[dict], axis: str, path) -> None:
    variants = sorted({r["variant"] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant in variants:
        sub = [r for r in rows if r["variant"] == variant and r["status"] == "ok"]
        xs = [r["value"] for r in sub]
        ys = [max(r["final_total"], 1e-300) for r in sub]
        ax.semilogy(xs, ys, marker="o", label=variant)
    ax.set_xlabel(axis)
    ax.set_ylabel("final total loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
