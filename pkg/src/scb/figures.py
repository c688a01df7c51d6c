"""Matplotlib renderings written next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evalkit import RunReport

_PNG_META = {"Software": "scb"}


def save_confusion_png(mat: np.ndarray, path: str | Path, title: str) -> None:
    labels = ["HC", "MCI", "AD"]
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    im = ax.imshow(mat, cmap="Blues")
    for (i, j), v in np.ndenumerate(mat):
        ax.text(j, i, str(v), ha="center", va="center",
                color="white" if v > mat.max() / 2 else "black")
    ax.set_xticks(range(3), labels)
    ax.set_yticks(range(3), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    fig.colorbar(im, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def save_metrics_png(report: RunReport, path: str | Path) -> None:
    reps = [r.rep for r in report.repetitions]
    acc = [r.accuracy for r in report.repetitions]
    auc = [r.macro_auc for r in report.repetitions]
    agg = report.aggregate()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(reps, acc, "o-", label=f"accuracy {agg['accuracy'][0]:.4f}")
    ax.plot(reps, auc, "s-", label=f"macro AUC {agg['macro_auc'][0]:.4f}")
    ax.axhline(agg["accuracy"][0], color="C0", ls=":", lw=0.8)
    ax.axhline(agg["macro_auc"][0], color="C1", ls=":", lw=0.8)
    ax.set_xlabel("repetition")
    ax.set_ylim(0.0, 1.05)
    ax.set_xticks(reps)
    ax.set_title(f"{report.pipeline} / {report.provider}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def save_pca_png(coords_by_uid: dict[str, tuple[float, float, int]], path: str | Path) -> None:
    """Scatter of 2-D PCA coordinates colored by cluster id (-1 = noise)."""
    fig, ax = plt.subplots(figsize=(4.5, 3.6))
    clusters = sorted({c for _, _, c in coords_by_uid.values()})
    for cid in clusters:
        xs = [x for x, _, c in coords_by_uid.values() if c == cid]
        ys = [y for _, y, c in coords_by_uid.values() if c == cid]
        if cid == -1:
            ax.scatter(xs, ys, s=12, c="lightgray", label="noise")
        else:
            ax.scatter(xs, ys, s=12, label=f"cluster {cid}")
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
