"""Figures for training histories and evaluation reports (written to files, never shown)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evalkit import EvalReport  # noqa: E402


def plot_history(history: list[dict], path) -> Path:
    """Training loss and validation accuracy per checked epoch."""
    path = Path(path)
    epochs = [h["epoch"] for h in history]
    fig, ax_loss = plt.subplots(figsize=(6, 3.5))
    ax_loss.plot(epochs, [h["loss"] for h in history], color="tab:blue", label="train loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean cross-entropy", color="tab:blue")
    ax_acc = ax_loss.twinx()
    ax_acc.plot(epochs, [h["validation_accuracy"] for h in history], color="tab:orange",
                label="validation accuracy")
    ax_acc.set_ylabel("validation accuracy (%)", color="tab:orange")
    ax_acc.set_ylim(0, 100)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_report(report: EvalReport, path) -> Path:
    """Per-task accuracy bars with the overall figure last."""
    path = Path(path)
    labels = [f"task {t}" for t in sorted(report.tasks)] + ["all"]
    values = [report.tasks[t].accuracy for t in sorted(report.tasks)] + [report.overall.accuracy]
    fig, ax = plt.subplots(figsize=(1.2 * len(labels) + 2, 3.5))
    bars = ax.bar(labels, values, color=["tab:blue"] * (len(labels) - 1) + ["tab:gray"])
    for bar, v in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, v + 1, f"{v:.1f}", ha="center", fontsize=8)
    ax.set_ylim(0, 105)
    ax.set_ylabel("per-response accuracy (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
