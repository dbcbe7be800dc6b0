"""Confusion matrix and derived metrics (micro accuracy, macro P/R/F1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import VidsError
from .model import Stage2Model, predict_probs


@dataclass
class ConfusionMatrix:
    counts: np.ndarray     # (C, C), rows = true class, cols = predicted
    classes: list

    @staticmethod
    def from_predictions(y_true, y_pred, classes) -> "ConfusionMatrix":
        c = len(classes)
        counts = np.zeros((c, c), dtype=np.int64)
        for t, p in zip(np.asarray(y_true), np.asarray(y_pred)):
            counts[t, p] += 1
        return ConfusionMatrix(counts, list(classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    @property
    def per_class_recall(self) -> np.ndarray:
        sup = self.support
        with np.errstate(invalid="ignore", divide="ignore"):
            rec = np.diag(self.counts) / sup
        return np.where(sup > 0, rec, np.nan)

    @property
    def per_class_precision(self) -> np.ndarray:
        pred = self.counts.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            prec = np.diag(self.counts) / pred
        return np.where(pred > 0, prec, 0.0)

    def _macro(self, values: np.ndarray) -> float:
        mask = self.support > 0
        return float(np.mean(values[mask]))

    @property
    def macro_precision(self) -> float:
        return self._macro(self.per_class_precision)

    @property
    def macro_recall(self) -> float:
        return self._macro(self.per_class_recall)

    @property
    def macro_f1(self) -> float:
        p = self.per_class_precision
        r = self.per_class_recall
        with np.errstate(invalid="ignore", divide="ignore"):
            f1 = 2 * p * r / (p + r)
        f1 = np.where((p + r) > 0, f1, 0.0)
        return self._macro(np.nan_to_num(f1))

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }

    def to_csv(self) -> str:
        header = "true\\pred," + ",".join(str(c) for c in self.classes)
        rows = [header]
        for label, row in zip(self.classes, self.counts):
            rows.append(f"{label}," + ",".join(str(int(v)) for v in row))
        return "\n".join(rows) + "\n"


def evaluate(model: Stage2Model, windows, labels=None) -> ConfusionMatrix:
    """Run the classifier over a labeled test set."""
    if labels is None:
        from ..data.windows import window_labels, windows_to_array
        labels = window_labels(windows)
        windows = windows_to_array(windows)
    labels = np.asarray(labels, dtype=np.int64)
    if windows.shape[0] == 0:
        raise VidsError("empty test set")
    index = {c: i for i, c in enumerate(model.classes)}
    unknown = [int(l) for l in labels if int(l) not in index]
    if unknown:
        raise VidsError(f"test labels {sorted(set(unknown))} unknown to the model")
    y_true = np.array([index[int(l)] for l in labels], dtype=np.int64)
    y_pred = predict_probs(model, np.asarray(windows, dtype=np.float32)).argmax(axis=1)
    return ConfusionMatrix.from_predictions(y_true, y_pred, model.classes)
