"""Binary confusion-matrix metrics with PD as the positive class.

A metric whose denominator vanishes is reported as an :class:`Undefined`
marker naming the empty marginal, never as 0.
"""
import math
from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True)
class Undefined:
    reason: str

    def __bool__(self):
        return False

    def __str__(self):
        return f"undefined ({self.reason})"


def is_defined(v):
    return not isinstance(v, Undefined)


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for k in ("tp", "tn", "fp", "fn"):
            if getattr(self, k) < 0:
                raise DataError(f"{k} must be non-negative")

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def add(self, true_pd, pred_pd):
        if true_pd and pred_pd:
            self.tp += 1
        elif true_pd:
            self.fn += 1
        elif pred_pd:
            self.fp += 1
        else:
            self.tn += 1

    def __iadd__(self, other):
        self.tp += other.tp
        self.tn += other.tn
        self.fp += other.fp
        self.fn += other.fn
        return self

    @classmethod
    def from_labels(cls, y_true, y_pred):
        cm = cls()
        for t, p in zip(y_true, y_pred):
            cm.add(t == 1 or t == "PD", p == 1 or p == "PD")
        return cm

    def swapped_predictions(self):
        """Matrix obtained by inverting every prediction."""
        return ConfusionMatrix(tp=self.fn, tn=self.fp, fp=self.tn, fn=self.tp)


def _check(cm):
    if cm.total < 1:
        raise DataError("confusion matrix is empty")


def accuracy(cm):
    _check(cm)
    return (cm.tp + cm.tn) / cm.total


def recall(cm):
    _check(cm)
    if cm.tp + cm.fn == 0:
        return Undefined("no actual positives (tp+fn=0)")
    return cm.tp / (cm.tp + cm.fn)


def precision(cm):
    _check(cm)
    if cm.tp + cm.fp == 0:
        return Undefined("no predicted positives (tp+fp=0)")
    return cm.tp / (cm.tp + cm.fp)


def f1(cm):
    p, r = precision(cm), recall(cm)
    if not is_defined(p):
        return p
    if not is_defined(r):
        return r
    if p + r == 0:
        return Undefined("precision and recall are both 0")
    return 2.0 * p * r / (p + r)


def mcc(cm):
    _check(cm)
    margins = {
        "tp+fp": cm.tp + cm.fp,
        "tp+fn": cm.tp + cm.fn,
        "tn+fp": cm.tn + cm.fp,
        "tn+fn": cm.tn + cm.fn,
    }
    empty = [k for k, v in margins.items() if v == 0]
    if empty:
        return Undefined(f"zero marginal {', '.join(empty)}")
    num = cm.tp * cm.tn - cm.fp * cm.fn
    den = math.sqrt(margins["tp+fp"] * margins["tp+fn"] * margins["tn+fp"] * margins["tn+fn"])
    return num / den


def summarize(cm):
    return {
        "tp": cm.tp,
        "tn": cm.tn,
        "fp": cm.fp,
        "fn": cm.fn,
        "accuracy": accuracy(cm),
        "recall": recall(cm),
        "f1": f1(cm),
        "mcc": mcc(cm),
    }


def to_jsonable(summary):
    return {k: (str(v) if isinstance(v, Undefined) else v) for k, v in summary.items()}


def format_row(summary):
    """Percentages to one decimal, MCC to two."""

    def pct(v):
        return f"{100 * v:.1f}%" if is_defined(v) else "undef"

    m = summary["mcc"]
    mtxt = f"{m:.2f}" if is_defined(m) else "undef"
    return (
        f"recall {pct(summary['recall'])}  accuracy {pct(summary['accuracy'])}  "
        f"f1 {pct(summary['f1'])}  mcc {mtxt}"
    )
