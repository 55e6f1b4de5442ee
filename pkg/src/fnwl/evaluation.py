"""Confusion matrices, averaged classification metrics and one-vs-rest AUC.

Confusion matrices are oriented rows = actual, columns = predicted.
Averaging modes: ``macro`` is the unweighted class mean, ``weighted``
weights classes by support (row sums), ``micro`` pools counts - which for
single-label multiclass data makes micro precision, recall and F1 all
equal to accuracy, and also makes weighted recall equal to accuracy.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError

AVERAGING_MODES = ("macro", "micro", "weighted")


def confusion_matrix(actual, predicted, n_classes: int) -> np.ndarray:
    """Count (actual, predicted) pairs into a K x K integer matrix."""
    actual = np.asarray(actual, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise ShapeError(
            f"label vectors must match: actual {actual.shape}, "
            f"predicted {predicted.shape}"
        )
    for name, v in (("actual", actual), ("predicted", predicted)):
        if len(v) and (v.min() < 0 or v.max() >= n_classes):
            raise ValueError(f"{name} labels fall outside [0, {n_classes})")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (actual, predicted), 1)
    return m


def _validated_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {m.shape}")
    if (m < 0).any():
        raise ValueError("confusion matrix contains negative counts")
    if m.sum() == 0:
        raise ValueError("confusion matrix is empty; metrics are undefined")
    return m


@dataclass
class PerClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    zero_division_classes: list[int]


def per_class_metrics(m) -> PerClassMetrics:
    """Precision/recall/F1 per class; zero denominators yield 0 and a flag."""
    m = _validated_matrix(m)
    diag = np.diag(m).astype(np.float64)
    col = m.sum(axis=0).astype(np.float64)
    row = m.sum(axis=1).astype(np.float64)
    flagged = sorted(
        set(np.flatnonzero(col == 0).tolist()) | set(np.flatnonzero(row == 0).tolist())
    )
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(diag), where=pr > 0)
    return PerClassMetrics(
        precision=precision, recall=recall, f1=f1,
        support=row.astype(np.int64), zero_division_classes=flagged,
    )


@dataclass
class MetricSummary:
    accuracy: float
    precision: float
    recall: float
    f1: float


def classification_metrics(m, averaging: str = "weighted") -> MetricSummary:
    """Accuracy plus averaged precision/recall/F1 for one averaging mode."""
    if averaging not in AVERAGING_MODES:
        raise ValueError(f"averaging must be one of {AVERAGING_MODES}, got {averaging!r}")
    m = _validated_matrix(m)
    total = float(m.sum())
    accuracy = float(np.trace(m)) / total
    if averaging == "micro":
        # pooled counts: TP = trace, and FP = FN = total - trace
        return MetricSummary(accuracy, accuracy, accuracy, accuracy)
    pc = per_class_metrics(m)
    if averaging == "macro":
        w = np.full(m.shape[0], 1.0 / m.shape[0])
    else:
        w = pc.support / total
    return MetricSummary(
        accuracy=accuracy,
        precision=float(w @ pc.precision),
        recall=float(w @ pc.recall),
        f1=float(w @ pc.f1),
    )


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    boundaries = np.flatnonzero(xs[1:] != xs[:-1]) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(x)]])
    ranks = np.empty(len(x))
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + e - 1) + 1.0
    return ranks


def roc_auc_ovr(scores, actual) -> tuple[float, dict[int, float], list[int]]:
    """Macro one-vs-rest AUC from per-class scores.

    Per class the AUC is the rank-based (Mann-Whitney) statistic of that
    class's score column separating its members from the rest, with tied
    scores counted half. Classes lacking positives or negatives are skipped
    with a warning and returned in the third element.
    """
    scores = np.asarray(scores, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.int64)
    if scores.ndim != 2 or actual.shape != (scores.shape[0],):
        raise ShapeError(
            f"scores {scores.shape} and labels {actual.shape} are inconsistent"
        )
    if not np.isfinite(scores).all():
        raise ValueError("scores contain non-finite values")
    n, k = scores.shape
    per_class: dict[int, float] = {}
    skipped: list[int] = []
    for c in range(k):
        pos = actual == c
        n_pos = int(pos.sum())
        n_neg = n - n_pos
        if n_pos == 0 or n_neg == 0:
            skipped.append(c)
            continue
        ranks = _average_ranks(scores[:, c])
        r_pos = float(ranks[pos].sum())
        per_class[c] = (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    if not per_class:
        raise ValueError("AUC undefined: every class lacks positives or negatives")
    if skipped:
        warnings.warn(
            f"AUC skipped classes without both positives and negatives: {skipped}",
            stacklevel=2,
        )
    macro = float(np.mean(list(per_class.values())))
    return macro, per_class, skipped


@dataclass
class EvaluationReport:
    """Everything the report path serialises for one classifier run."""

    confusion: np.ndarray
    accuracy: float
    averages: dict[str, dict[str, float]]
    per_class: list[dict]
    auc_ovr_macro: float | None
    auc_per_class: dict[int, float]
    auc_skipped_classes: list[int]
    auc_degenerate: bool
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "averages": self.averages,
            "per_class": self.per_class,
            "auc_ovr_macro": self.auc_ovr_macro,
            "auc_per_class": {str(k): v for k, v in self.auc_per_class.items()},
            "auc_skipped_classes": self.auc_skipped_classes,
            "auc_degenerate": self.auc_degenerate,
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json())


def build_report(
    m,
    scores=None,
    actual=None,
    metadata: dict | None = None,
) -> EvaluationReport:
    """Assemble the full report: all three averaging modes, AUC if possible.

    When no scores are supplied the AUC fields are left empty and flagged
    degenerate rather than fabricated from labels.
    """
    m = _validated_matrix(m)
    pc = per_class_metrics(m)
    averages = {}
    for mode in AVERAGING_MODES:
        s = classification_metrics(m, mode)
        averages[mode] = {"precision": s.precision, "recall": s.recall, "f1": s.f1}
    accuracy = classification_metrics(m, "micro").accuracy
    per_class = [
        {
            "class": c,
            "precision": float(pc.precision[c]),
            "recall": float(pc.recall[c]),
            "f1": float(pc.f1[c]),
            "support": int(pc.support[c]),
        }
        for c in range(m.shape[0])
    ]
    auc_macro = None
    auc_per_class: dict[int, float] = {}
    skipped: list[int] = []
    degenerate = scores is None or actual is None
    if not degenerate:
        auc_macro, auc_per_class, skipped = roc_auc_ovr(scores, actual)
    return EvaluationReport(
        confusion=m,
        accuracy=accuracy,
        averages=averages,
        per_class=per_class,
        auc_ovr_macro=auc_macro,
        auc_per_class=auc_per_class,
        auc_skipped_classes=skipped,
        auc_degenerate=degenerate,
        metadata=metadata or {},
    )


def confusion_to_csv_text(m) -> str:
    """Confusion matrix as CSV with actual/predicted headers."""
    m = np.asarray(m, dtype=np.int64)
    k = m.shape[0]
    lines = ["actual\\predicted," + ",".join(str(c) for c in range(k))]
    for r in range(k):
        lines.append(str(r) + "," + ",".join(str(v) for v in m[r]))
    return "\n".join(lines) + "\n"


def write_confusion_csv(m, path) -> None:
    Path(path).write_text(confusion_to_csv_text(m))
