"""Confusion matrices, pooled and class-mean metrics, one-vs-rest ROC/AUC."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..detsim.events import CLASSES

SCORE_TOL = 1e-6


class DegenerateClassError(ValueError):
    """A one-vs-rest problem has no positives or no negatives."""


@dataclass
class PredictionRecord:
    event_id: int
    truth: int
    scores: np.ndarray
    predicted: int | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1 or not np.all(np.isfinite(self.scores)):
            raise ValueError(f"event {self.event_id}: scores must be a finite vector")
        if abs(self.scores.sum() - 1.0) > SCORE_TOL:
            raise ValueError(f"event {self.event_id}: scores sum to {self.scores.sum():.9g}")
        if self.predicted is None:
            self.predicted = int(np.argmax(self.scores))
        self.truth = int(self.truth)


def records_from_arrays(truth, scores, event_ids=None):
    scores = np.asarray(scores)
    ids = range(len(truth)) if event_ids is None else event_ids
    return [PredictionRecord(int(e), int(t), s) for e, t, s in zip(ids, truth, scores)]


def _arrays(records, n_classes):
    if len(records) == 0:
        raise ValueError("no prediction records")
    truth = np.array([r.truth for r in records])
    pred = np.array([r.predicted for r in records])
    scores = np.stack([r.scores for r in records])
    if scores.shape[1] != n_classes:
        raise ValueError(f"score vectors have {scores.shape[1]} entries, expected {n_classes}")
    return truth, pred, scores


def confusion_counts(truth, pred, n_classes=3):
    """N[t, p] = number of events with truth t predicted as p."""
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(truth), np.asarray(pred)), 1)
    return counts


@dataclass
class Confusion:
    counts: np.ndarray
    recall: np.ndarray  # rows normalized by truth counts
    precision: np.ndarray  # columns normalized by prediction counts
    empty_rows: list  # classes without truth support
    empty_cols: list  # classes never predicted


def normalize_confusion(counts):
    counts = np.asarray(counts)
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    recall = np.divide(counts, rows[:, None], out=np.zeros(counts.shape), where=rows[:, None] > 0)
    precision = np.divide(counts, cols[None, :], out=np.zeros(counts.shape),
                          where=cols[None, :] > 0)
    return Confusion(counts, recall, precision,
                     [int(i) for i in np.flatnonzero(rows == 0)],
                     [int(i) for i in np.flatnonzero(cols == 0)])


def confusion_matrices(records, n_classes=3):
    truth, pred, _ = _arrays(records, n_classes)
    return normalize_confusion(confusion_counts(truth, pred, n_classes))


def aggregate_from_counts(counts):
    """Accuracy plus pooled (micro) and class-mean (macro) precision and recall.

    Pooled true positives are the trace and pooled predictions and truths
    both number N, so micro precision and recall are the same quotient as
    accuracy. Classes with no predictions (or no truths) contribute 0 to
    the macro precision (recall).
    """
    counts = np.asarray(counts)
    total = int(counts.sum())
    correct = int(np.trace(counts))
    conf = normalize_confusion(counts)
    accuracy = correct / total
    tp_fp = int(conf.counts.sum(axis=0).sum())
    tp_fn = int(conf.counts.sum(axis=1).sum())
    return {
        "accuracy": accuracy,
        "micro_precision": correct / tp_fp,
        "micro_recall": correct / tp_fn,
        "macro_precision": float(np.mean(np.diag(conf.precision))),
        "macro_recall": float(np.mean(np.diag(conf.recall))),
    }


def aggregate_metrics(records, n_classes=3):
    truth, pred, _ = _arrays(records, n_classes)
    return aggregate_from_counts(confusion_counts(truth, pred, n_classes))


def roc_curve(scores, positive, name="class"):
    """Threshold sweep of ``score >= t`` from +inf down to -inf.

    Returns (fpr, tpr, thresholds) with one point per distinct score plus
    the two infinite endpoints, and the trapezoidal AUC. Tied scores move
    along a diagonal segment, which credits a tied pair with one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        kind = "no positive" if n_pos == 0 else "no negative"
        raise DegenerateClassError(f"ROC undefined for {name}: {kind} examples")
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    distinct = np.flatnonzero(np.diff(s)) if len(s) > 1 else np.array([], dtype=int)
    ends = np.concatenate([distinct, [len(s) - 1]])
    tp = np.concatenate([[0], np.cumsum(pos)[ends], [n_pos]]).astype(np.int64)
    fp = np.concatenate([[0], np.cumsum(~pos)[ends], [n_neg]]).astype(np.int64)
    thresholds = np.concatenate([[np.inf], s[ends], [-np.inf]])
    # exact integer trapezoid: sum of dfp * (tp_left + tp_right) over 2 * P * N
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    return fp / n_neg, tp / n_pos, thresholds, auc


def pairwise_auc(scores, positive):
    """Fraction of (positive, negative) pairs ranked correctly, ties counting one half."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool)
    a, b = s[pos], s[~pos]
    if len(a) == 0 or len(b) == 0:
        raise DegenerateClassError("pairwise AUC needs positives and negatives")
    wins = int((a[:, None] > b[None, :]).sum())
    ties = int((a[:, None] == b[None, :]).sum())
    return (2 * wins + ties) / (2 * len(a) * len(b))


def roc_auc(records, target, n_classes=3, class_names=CLASSES):
    """One-vs-rest ROC of class ``target`` on its score column."""
    truth, _, scores = _arrays(records, n_classes)
    fpr, tpr, thr, auc = roc_curve(scores[:, target], truth == target, class_names[target])
    return list(zip(fpr.tolist(), tpr.tolist(), thr.tolist())), auc


SCALAR_NAMES = ("accuracy", "micro_precision", "micro_recall", "macro_precision",
                "macro_recall", "auc_NuE_CC", "auc_NuMu_CC", "auc_NC", "macro_auc")


@dataclass
class MetricsReport:
    accuracy: float
    micro_precision: float
    micro_recall: float
    macro_precision: float
    macro_recall: float
    auc: dict  # class name -> AUC
    macro_auc: float
    recall_matrix: np.ndarray
    precision_matrix: np.ndarray
    counts: np.ndarray
    roc: dict  # class name -> [(fpr, tpr, threshold), ...]
    n_events: int
    factor: int = 1
    classes: tuple = CLASSES
    empty_rows: list = field(default_factory=list)
    empty_cols: list = field(default_factory=list)

    def scalars(self):
        out = {k: getattr(self, k) for k in SCALAR_NAMES[:5]}
        out.update({f"auc_{c}": self.auc[c] for c in self.classes})
        out["macro_auc"] = self.macro_auc
        return out

    def equals(self, other):
        """Bit-for-bit equality of every number in the report."""
        if self.scalars() != other.scalars() or self.roc != other.roc:
            return False
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("recall_matrix", "precision_matrix", "counts"))


def evaluate_records(records, factor=1, n_classes=3, class_names=CLASSES):
    truth, pred, scores = _arrays(records, n_classes)
    counts = confusion_counts(truth, pred, n_classes)
    conf = normalize_confusion(counts)
    agg = aggregate_from_counts(counts)
    auc, roc = {}, {}
    for k in range(n_classes):
        roc[class_names[k]], auc[class_names[k]] = roc_auc(records, k, n_classes, class_names)
    return MetricsReport(
        accuracy=agg["accuracy"], micro_precision=agg["micro_precision"],
        micro_recall=agg["micro_recall"], macro_precision=agg["macro_precision"],
        macro_recall=agg["macro_recall"], auc=auc,
        macro_auc=float(np.mean([auc[c] for c in class_names[:n_classes]])),
        recall_matrix=conf.recall, precision_matrix=conf.precision, counts=counts, roc=roc,
        n_events=len(records), factor=int(factor), classes=tuple(class_names[:n_classes]),
        empty_rows=conf.empty_rows, empty_cols=conf.empty_cols)
