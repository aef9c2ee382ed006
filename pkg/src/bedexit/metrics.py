"""Binary classification metrics: confusion counts, F1 family, and AUPRC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    auprc: float

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "auprc": self.auprc,
        }

    def format_lines(self) -> list[str]:
        return [
            f"samples    {self.tp + self.fp + self.tn + self.fn}",
            f"tp/fp/tn/fn {self.tp}/{self.fp}/{self.tn}/{self.fn}",
            f"precision  {self.precision:.6f}",
            f"recall     {self.recall:.6f}",
            f"f1         {self.f1:.6f}",
            f"accuracy   {self.accuracy:.6f}",
            f"auprc      {self.auprc:.6f}",
        ]


def _check_inputs(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if p.ndim != 1 or p.shape != y.shape:
        raise DataError("probs and labels must be 1-D and equally long")
    if len(p) == 0:
        raise DataError("empty input")
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise DataError("probabilities must lie in [0, 1]")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be binary")
    return p, y.astype(int)


def confusion(probs, labels, threshold: float) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with `prob >= threshold` counting as positive."""
    p, y = _check_inputs(probs, labels)
    pred = p >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return tp, fp, tn, fn


def auprc(probs, labels) -> float:
    """Average precision over descending score thresholds.

    Samples sharing a score enter the staircase as one group, so the result
    does not depend on the order of tied samples. Undefined (raises) when no
    positive label is present.
    """
    p, y = _check_inputs(probs, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DataError("AUPRC undefined: no positive labels")
    order = np.argsort(-p, kind="stable")
    scores = p[order]
    hits = y[order]
    # index of the last sample in each equal-score group
    group_end = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    cum_tp = np.cumsum(hits)[group_end]
    cum_n = group_end + 1.0
    prec = cum_tp / cum_n
    rec = cum_tp / n_pos
    delta_rec = np.diff(np.concatenate(([0.0], rec)))
    return float(np.sum(delta_rec * prec))


def evaluate(probs, labels, threshold: float = 0.5) -> EvalReport:
    """Full report at the given alarm threshold."""
    tp, fp, tn, fn = confusion(probs, labels, threshold)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    accuracy = (tp + tn) / (tp + fp + tn + fn)
    return EvalReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall, f1=f1,
        accuracy=accuracy, auprc=auprc(probs, labels),
    )
