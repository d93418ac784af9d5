"""Static result plots written by the train and ablate commands."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsReport  # noqa: E402


def save_loss_curve(losses: list[float], path: str | Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(losses, lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_class_bars(report: MetricsReport, path: str | Path):
    ious = [v if v is not None else 0.0 for v in report.per_class_iou]
    f1s = [v if v is not None else 0.0 for v in report.per_class_f1]
    xs = range(len(ious))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([x - 0.2 for x in xs], ious, width=0.4, label="IoU")
    ax.bar([x + 0.2 for x in xs], f1s, width=0.4, label="F1")
    ax.set_xticks(list(xs))
    ax.set_xlabel("class")
    ax.set_ylim(0, 1)
    ax.legend()
    ax.set_title(f"per-class scores (mIoU {report.miou:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_bars(rows, path: str | Path):
    names = [r.name for r in rows]
    mious = [r.miou for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(names)), 4))
    ax.bar(names, mious)
    ax.set_ylabel("median mIoU")
    ax.set_ylim(0, 1)
    ax.set_title("ablation study")
    plt.xticks(rotation=30, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
