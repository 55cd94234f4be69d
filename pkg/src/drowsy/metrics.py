"""Classification metrics with CLOSED as the positive class."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Scores:
    """Precision/recall/accuracy. ``None`` marks a metric with a zero denominator."""

    precision: float | None
    recall: float | None
    accuracy: float | None


def confusion(pairs: Iterable[tuple[object, object]], positive=0) -> ConfusionCounts:
    """Count (predicted, true) pairs; ``positive`` is the CLOSED label value."""
    tp = fp = tn = fn = 0
    for pred, true in pairs:
        p, t = pred == positive, true == positive
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def _ratio(num, den):
    return num / den if den else None


def precision_recall_accuracy(c: ConfusionCounts) -> Scores:
    return Scores(_ratio(c.tp, c.tp + c.fp), _ratio(c.tp, c.tp + c.fn), _ratio(c.tp + c.tn, c.total))


@dataclass(frozen=True)
class RocResult:
    auc: float
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def roc_auc(scores, labels) -> RocResult:
    """AUC by Mann-Whitney pair counting (ties count one half) plus the ROC curve.

    ``labels`` are booleans, True for the positive class. The curve has one
    point per distinct score threshold, starting from (0, 0).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both classes present")

    # Average ranks give each tied pair weight 1/2.
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(s.size)
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], s.size]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    auc = u / (n_pos * n_neg)

    desc = order[::-1]
    ds, dy = s[desc], y[desc]
    last = np.r_[ds[1:] != ds[:-1], True]
    tps = np.cumsum(dy)[last]
    fps = np.cumsum(~dy)[last]
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, ds[last]]
    return RocResult(float(auc), fpr, tpr, thresholds)


@dataclass
class RunStats:
    """Per-run accuracies (percent) with population mean/variance/stddev."""

    accuracies: list[float]
    mean: float
    variance: float
    stddev: float
    failures: list[tuple[int, str]] = field(default_factory=list)

    @classmethod
    def from_accuracies(cls, accuracies, failures=()) -> "RunStats":
        acc = [float(a) for a in accuracies]
        if not acc:
            return cls([], math.nan, math.nan, math.nan, list(failures))
        mean = math.fsum(acc) / len(acc)
        var = math.fsum((a - mean) ** 2 for a in acc) / len(acc)
        return cls(acc, mean, var, math.sqrt(var), list(failures))
