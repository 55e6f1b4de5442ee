"""Render evaluation and training figures to image files.

Used by the CLI report paths: wherever a delimited artifact (report JSON,
confusion CSV, training-log CSV) is written, the matching figure lands
next to it. The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .training import TrainLog


def nback_class_names(n_classes: int) -> list[str]:
    if n_classes == 4:
        return [f"{c}-back" for c in range(4)]
    return [f"class {c}" for c in range(n_classes)]


def save_confusion_figure(m, path, class_names=None, title="Confusion matrix") -> None:
    m = np.asarray(m)
    k = m.shape[0]
    names = class_names or nback_class_names(k)
    fig, ax = plt.subplots(figsize=(1.1 * k + 2.2, 1.1 * k + 1.6))
    im = ax.imshow(m, cmap="Blues")
    threshold = m.max() / 2.0 if m.max() else 0.5
    for r in range(k):
        for c in range(k):
            ax.text(
                c, r, f"{m[r, c]:d}", ha="center", va="center",
                color="white" if m[r, c] > threshold else "black", fontsize=9,
            )
    ax.set_xticks(range(k), names, rotation=45, ha="right")
    ax.set_yticks(range(k), names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("Actual")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curves(log: TrainLog, path, title="Training progress") -> None:
    epochs = [r.epoch for r in log.records]
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    ax_acc.plot(epochs, [r.train_acc for r in log.records], label="train")
    test_pairs = [(r.epoch, r.test_acc) for r in log.records if np.isfinite(r.test_acc)]
    if test_pairs:
        ax_acc.plot(*zip(*test_pairs), label="test")
    ax_acc.set_xlabel("Epoch")
    ax_acc.set_ylabel("Accuracy")
    ax_acc.set_ylim(0.0, 1.02)
    ax_acc.legend()
    ax_acc.grid(alpha=0.3)
    ax_loss.plot(epochs, [r.train_loss for r in log.records], color="tab:red")
    ax_loss.set_xlabel("Epoch")
    ax_loss.set_ylabel("Training loss")
    ax_loss.grid(alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
