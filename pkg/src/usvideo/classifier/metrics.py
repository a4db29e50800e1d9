"""Binary classification metrics with malignant as the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from usvideo.errors import ConfigurationError

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "f1")
THRESHOLD = 0.5


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


@dataclass(frozen=True)
class ClassificationMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    f1: float
    undefined: tuple[str, ...] = ()  # ratios whose denominator was zero (reported as 0)

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "ClassificationMetrics":
        if min(tp, fp, tn, fn) < 0:
            raise ConfigurationError("confusion counts must be non-negative")
        undefined = []
        acc, bad = _ratio(tp + tn, tp + tn + fp + fn)
        sens, b1 = _ratio(tp, tp + fn)
        spec, b2 = _ratio(tn, tn + fp)
        prec, b3 = _ratio(tp, tp + fp)
        f1, b4 = _ratio(2 * prec * sens, prec + sens)
        for name, flag in zip(METRIC_NAMES, (bad, b1, b2, b3, b4)):
            if flag:
                undefined.append(name)
        return cls(tp, fp, tn, fn, acc, sens, spec, prec, f1, tuple(undefined))

    @classmethod
    def from_predictions(cls, probs, labels, threshold: float = THRESHOLD) -> "ClassificationMetrics":
        """Probabilities at or above ``threshold`` are called malignant (label 1)."""
        pred = np.asarray(probs) >= threshold
        y = np.asarray(labels).astype(bool)
        if pred.shape != y.shape:
            raise ConfigurationError(f"{pred.size} predictions for {y.size} labels")
        return cls.from_counts(
            int(np.sum(pred & y)), int(np.sum(pred & ~y)), int(np.sum(~pred & ~y)), int(np.sum(~pred & y))
        )

    def as_row(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def mean_metrics(per_fold: list[ClassificationMetrics]) -> dict[str, float]:
    if not per_fold:
        raise ConfigurationError("no folds to average")
    return {k: float(np.mean([getattr(m, k) for m in per_fold])) for k in METRIC_NAMES}
