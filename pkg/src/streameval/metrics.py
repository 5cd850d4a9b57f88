"""Metric functions over a window's joined examples.

All functions are pure.  Each returns a :class:`MetricPoint` whose value is
``None`` exactly when its support is zero, so empty windows stay in the
time series instead of disappearing.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .events import JoinedExample

EPSILON = 1e-15
DEFAULT_PERCENTILE_LEVELS: tuple[int, ...] = (10, 30, 50, 70, 90)

ACCURACY = "accuracy"
PRECISION = "precision"
RECALL = "recall"
F1 = "f1"
POSITIVE_FRACTION = "positive_fraction"
LABELED_FRACTION = "labeled_fraction"


def loss_metric_name(level: int) -> str:
    return f"loss_p{level}"


@dataclass(frozen=True)
class MetricPoint:
    """One row of a metric time series."""

    window_end: int | None
    metric: str
    value: float | None
    support: int

    def __post_init__(self) -> None:
        if self.support < 0:
            raise ValueError("support must be >= 0")
        if (self.support == 0) != (self.value is None):
            raise ValueError(
                f"{self.metric}: value must be null exactly when support is 0"
            )


@dataclass(frozen=True)
class LossPercentileSet:
    """Loss value per percentile level, nondecreasing in the level."""

    values: Mapping[int, float]
    support: int

    def as_points(self, window_end: int | None) -> list[MetricPoint]:
        return [
            MetricPoint(window_end, loss_metric_name(p), v, self.support)
            for p, v in sorted(self.values.items())
        ]


def predicted_label(score: float) -> int:
    """Round ``score`` to the nearest integer, halves going up."""

    return 1 if score >= 0.5 else 0


def is_correct(score: float, label: int) -> bool:
    return predicted_label(score) == label


@dataclass
class ConfusionCounts:
    """Binary confusion matrix; also usable as window statistics."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def _cell(self, example: JoinedExample) -> str:
        pred = predicted_label(example.score)
        if example.label == 1:
            return "tp" if pred == 1 else "fn"
        return "fp" if pred == 1 else "tn"

    def add(self, example: JoinedExample) -> None:
        cell = self._cell(example)
        setattr(self, cell, getattr(self, cell) + 1)

    def remove(self, example: JoinedExample) -> None:
        cell = self._cell(example)
        value = getattr(self, cell)
        if value <= 0:
            raise ValueError(f"cannot remove from empty {cell} cell")
        setattr(self, cell, value - 1)

    @classmethod
    def from_examples(cls, examples: Iterable[JoinedExample]) -> "ConfusionCounts":
        counts = cls()
        for example in examples:
            counts.add(example)
        return counts

    @property
    def support(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def correct(self) -> int:
        return self.tp + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def predicted_positives(self) -> int:
        return self.tp + self.fp


def _ratio(metric: str, num: int, den: int, window_end: int | None) -> MetricPoint:
    if den == 0:
        return MetricPoint(window_end, metric, None, 0)
    return MetricPoint(window_end, metric, num / den, den)


def accuracy_from_counts(counts: ConfusionCounts, window_end: int | None = None) -> MetricPoint:
    return _ratio(ACCURACY, counts.correct, counts.support, window_end)


def positive_fraction_from_counts(
    counts: ConfusionCounts, window_end: int | None = None
) -> MetricPoint:
    return _ratio(POSITIVE_FRACTION, counts.positives, counts.support, window_end)


def precision_recall_f1_from_counts(
    counts: ConfusionCounts, window_end: int | None = None
) -> tuple[MetricPoint, MetricPoint, MetricPoint]:
    precision = _ratio(PRECISION, counts.tp, counts.predicted_positives, window_end)
    recall = _ratio(RECALL, counts.tp, counts.positives, window_end)
    if precision.value is None or recall.value is None:
        f1 = MetricPoint(window_end, F1, None, 0)
    elif precision.value + recall.value == 0:
        f1 = MetricPoint(window_end, F1, None, 0)
    else:
        value = 2 * precision.value * recall.value / (precision.value + recall.value)
        f1 = MetricPoint(window_end, F1, value, counts.support)
    return precision, recall, f1


def accuracy(examples: Iterable[JoinedExample], window_end: int | None = None) -> MetricPoint:
    """Fraction of examples whose rounded score equals the label."""

    return accuracy_from_counts(ConfusionCounts.from_examples(examples), window_end)


def positive_fraction(
    examples: Iterable[JoinedExample], window_end: int | None = None
) -> MetricPoint:
    """Fraction of examples labeled 1."""

    return positive_fraction_from_counts(ConfusionCounts.from_examples(examples), window_end)


def precision_recall_f1(
    examples: Iterable[JoinedExample], window_end: int | None = None
) -> tuple[MetricPoint, MetricPoint, MetricPoint]:
    """Precision, recall and F1 with a 0.5 round-half-up threshold.

    Precision is null without predicted positives, recall without actual
    positives, and F1 when either is null or both are zero.
    """

    return precision_recall_f1_from_counts(ConfusionCounts.from_examples(examples), window_end)


def labeled_fraction(labeled: int, predicted: int, window_end: int | None = None) -> MetricPoint:
    """Share of the window's predictions that already carry a label."""

    return _ratio(LABELED_FRACTION, labeled, predicted, window_end)


def _clip(score: float) -> float:
    return min(max(score, EPSILON), 1.0 - EPSILON)


def log_loss(example: JoinedExample) -> float:
    """Binary cross-entropy of one example with epsilon clipping."""

    s = _clip(example.score)
    if example.label == 1:
        return -math.log(s)
    return -math.log(1.0 - s)


def log_losses(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> np.ndarray:
    """Vectorized :func:`log_loss` over parallel score and label arrays."""

    s = np.clip(np.asarray(scores, dtype=float), EPSILON, 1.0 - EPSILON)
    y = np.asarray(labels, dtype=float)
    return np.where(y == 1.0, -np.log(s), -np.log(1.0 - s))


def percentiles(
    losses: Sequence[float] | np.ndarray, levels: Sequence[int] = DEFAULT_PERCENTILE_LEVELS
) -> dict[int, float] | None:
    """Linearly interpolated percentiles at ``levels``; ``None`` when empty."""

    arr = np.asarray(losses, dtype=float)
    if arr.size == 0:
        return None
    ordered = sorted(levels)
    values = np.percentile(arr, ordered, method="linear")
    # interpolation rounding must not break p_i <= p_j
    values = np.maximum.accumulate(values)
    return {int(p): float(v) for p, v in zip(ordered, values)}


def loss_percentiles(
    examples: Iterable[JoinedExample], levels: Sequence[int] = DEFAULT_PERCENTILE_LEVELS
) -> LossPercentileSet | None:
    """Percentiles of the per-example log loss; ``None`` for an empty window."""

    scores: list[float] = []
    labels: list[int] = []
    for example in examples:
        scores.append(example.score)
        labels.append(example.label)
    values = percentiles(log_losses(scores, labels), levels)
    if values is None:
        return None
    return LossPercentileSet(values, len(scores))


__all__ = [
    "EPSILON",
    "DEFAULT_PERCENTILE_LEVELS",
    "ACCURACY",
    "PRECISION",
    "RECALL",
    "F1",
    "POSITIVE_FRACTION",
    "LABELED_FRACTION",
    "loss_metric_name",
    "MetricPoint",
    "LossPercentileSet",
    "ConfusionCounts",
    "predicted_label",
    "is_correct",
    "accuracy",
    "accuracy_from_counts",
    "positive_fraction",
    "positive_fraction_from_counts",
    "precision_recall_f1",
    "precision_recall_f1_from_counts",
    "labeled_fraction",
    "log_loss",
    "log_losses",
    "percentiles",
    "loss_percentiles",
]
