from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    """Positive-class (label 1) precision, recall and F1.

    When built from several seeds the headline numbers are arithmetic means
    of the per-seed values.
    """

    precision: float
    recall: float
    f1: float
    per_seed: list[tuple[float, float, float]] = field(default_factory=list)

    @classmethod
    def mean_of(cls, reports: list["MetricsReport"]) -> "MetricsReport":
        if not reports:
            raise ValueError("no reports to average")
        triples = [(r.precision, r.recall, r.f1) for r in reports]
        p, r, f = (float(np.mean(col)) for col in zip(*triples))
        return cls(p, r, f, triples)


def confusion(predictions, labels) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with class 1 as positive."""
    pred = np.asarray(predictions)
    y = np.asarray(labels)
    if pred.shape != y.shape:
        raise ValueError(f"length mismatch: {pred.shape[0] if pred.ndim else 0} predictions, "
                         f"{y.shape[0] if y.ndim else 0} labels")
    if not np.isin(y, (0, 1)).all() or not np.isin(pred, (0, 1)).all():
        raise ValueError("labels and predictions must be binary")
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    return tp, fp, fn, tn


def evaluate(predictions, labels) -> MetricsReport:
    tp, fp, fn, _ = confusion(predictions, labels)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    # harmonic mean of P and R written over the counts: one rounding, exact zero when tp = 0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return MetricsReport(precision, recall, f1)


def f1_score(predictions, labels) -> float:
    return evaluate(predictions, labels).f1
