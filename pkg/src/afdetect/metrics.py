"""ROC / precision-recall curves, areas, and F1 for binary AF scores."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import NoPositives, SingleClassInput


def _check(labels, scores):
    y = np.asarray(labels).astype(int).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return y, s


def _sweep(y, s):
    """Cumulative TP/FP at each distinct score, highest first (ties grouped)."""
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    last_of_group = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    tp = np.cumsum(y_sorted)[last_of_group]
    fp = (last_of_group + 1) - tp
    return s_sorted[last_of_group], tp, fp


def roc_curve(labels, scores):
    """Return ``(fpr, tpr, thresholds, auroc)``; thresholds include the +/-inf sentinels."""
    y, s = _check(labels, scores)
    n_pos, n_neg = int(y.sum()), int((1 - y).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("ROC needs at least one positive and one negative")
    thr, tp, fp = _sweep(y, s)
    tpr = np.r_[0.0, tp / n_pos, 1.0]
    fpr = np.r_[0.0, fp / n_neg, 1.0]
    thresholds = np.r_[np.inf, thr, -np.inf]
    auroc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return fpr, tpr, thresholds, auroc


def pr_curve(labels, scores):
    """Return ``(recall, precision, thresholds, auprc)``.

    The curve starts at recall 0 with the precision of the highest-score
    group; the area is the right-continuous step sum ``sum (R_k - R_{k-1}) P_k``.
    """
    y, s = _check(labels, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("precision-recall needs at least one positive")
    thr, tp, fp = _sweep(y, s)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    auprc = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return (np.r_[0.0, recall], np.r_[precision[0], precision], np.r_[np.inf, thr], auprc)


@dataclass
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self):
        if self.tp == 0:
            return 0.0
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r)


def confusion_at(labels, scores, threshold=0.5) -> Confusion:
    y, s = _check(labels, scores)
    pred = s >= threshold
    return Confusion(int(np.sum(pred & (y == 1))), int(np.sum(pred & (y == 0))),
                     int(np.sum(~pred & (y == 0))), int(np.sum(~pred & (y == 1))))


def f1_at(labels, scores, threshold=0.5):
    """Return ``(f1, confusion)``; positive iff score >= threshold."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be in [0, 1]")
    c = confusion_at(labels, scores, threshold)
    return c.f1, c


@dataclass
class EvalReport:
    auroc: float
    auprc: float
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float
    n: int
    roc: dict
    pr: dict

    def to_json(self, path=None) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            if isinstance(v, list):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v

        text = json.dumps(clean(asdict(self)), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def write_curves(self, roc_path, pr_path) -> None:
        with open(roc_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "fpr", "tpr"])
            w.writerows(zip(self.roc["thresholds"], self.roc["fpr"], self.roc["tpr"]))
        with open(pr_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "recall", "precision"])
            w.writerows(zip(self.pr["thresholds"], self.pr["recall"], self.pr["precision"]))


def evaluate_scores(labels, scores, threshold=0.5) -> EvalReport:
    fpr, tpr, roc_thr, auroc = roc_curve(labels, scores)
    rec, prec, pr_thr, auprc = pr_curve(labels, scores)
    f1, c = f1_at(labels, scores, threshold)
    return EvalReport(auroc, auprc, f1, c.precision, c.recall, c.tp, c.fp, c.tn, c.fn, threshold,
                      c.tp + c.fp + c.tn + c.fn,
                      {"fpr": fpr.tolist(), "tpr": tpr.tolist(), "thresholds": roc_thr.tolist()},
                      {"recall": rec.tolist(), "precision": prec.tolist(), "thresholds": pr_thr.tolist()})
