"""Accuracy and macro-averaged F1 over the three polarities."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from ..data import Polarity


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    precision: Dict[str, float]
    recall: Dict[str, float]
    f1: Dict[str, float]
    confusion: List[List[int]]
    n: int
    absent_classes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(gold, pred, n: int = 3) -> np.ndarray:
    """Counts indexed [gold, predicted]."""
    gold = np.asarray(gold, dtype=np.intp)
    pred = np.asarray(pred, dtype=np.intp)
    return np.bincount(gold * n + pred, minlength=n * n).reshape(n, n)


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else 0.0


def compute_metrics(gold, pred) -> MetricsReport:
    """Per-class scores use 0 for 0/0; a class absent from gold and predictions is flagged."""
    gold = np.asarray(gold, dtype=np.intp)
    pred = np.asarray(pred, dtype=np.intp)
    if gold.size == 0:
        raise ValueError("cannot evaluate an empty test set")
    if gold.shape != pred.shape:
        raise ValueError("gold and predictions differ in length")
    cm = confusion_matrix(gold, pred)
    precision, recall, f1, absent = {}, {}, {}, []
    for c in Polarity:
        name = c.label
        tp = cm[c, c]
        p = _ratio(tp, cm[:, c].sum())
        r = _ratio(tp, cm[c, :].sum())
        precision[name], recall[name] = p, r
        f1[name] = _ratio(2 * p * r, p + r)
        if cm[c, :].sum() == 0 and cm[:, c].sum() == 0:
            absent.append(name)
    return MetricsReport(
        accuracy=_ratio(np.trace(cm), cm.sum()),
        macro_f1=float(np.mean(list(f1.values()))),
        precision=precision, recall=recall, f1=f1,
        confusion=cm.tolist(), n=int(gold.size), absent_classes=absent,
    )
