"""Label delay simulation and the event-time join.

:func:`simulate` turns a fully labeled stream into a delayed, incomplete one.
:class:`JoinState` merges a prediction stream (ordered by event time) with a
label stream (ordered by availability time) as an evaluation clock moves
forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Callable, Iterable, Iterator

import numpy as np

from .events import MS_PER_DAY, JoinedExample, LabelEvent, PredictionEvent

logger = logging.getLogger(__name__)


def sample_delay(u: float, mean_delay_days: float) -> float:
    """Inverse-CDF draw from an exponential law with the given mean (days)."""

    if not 0.0 <= u < 1.0:
        raise ValueError(f"u={u!r} must lie in [0, 1)")
    if mean_delay_days <= 0:
        raise ValueError("mean_delay_days must be > 0")
    return -mean_delay_days * math.log1p(-u)


DelaySampler = Callable[[float, float], float]

DELAY_FAMILIES: dict[str, DelaySampler] = {"exponential": sample_delay}


@dataclass(frozen=True)
class DelayConfig:
    mean_delay_days: float = 7.0
    labeled_fraction: float = 0.1
    seed: int = 0
    family: str = "exponential"

    def __post_init__(self) -> None:
        if not self.mean_delay_days > 0:
            raise ValueError("mean_delay_days must be > 0")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ValueError("labeled_fraction must be in (0, 1]")
        if self.family not in DELAY_FAMILIES:
            raise ValueError(f"unknown delay family {self.family!r}")


def simulate(labels: Iterable[LabelEvent], config: DelayConfig) -> list[LabelEvent]:
    """Drop and delay labels.

    Input labels carry the prediction's event time as their timestamp.  Each
    label is kept with probability ``labeled_fraction``; kept labels become
    available ``d`` days later.  Two uniforms are drawn per input label
    whatever the outcome, so the result depends only on the seed and input.
    """

    source = list(labels)
    rng = np.random.default_rng(config.seed)
    keep_u = rng.random(len(source))
    delay_u = rng.random(len(source))
    sampler = DELAY_FAMILIES[config.family]

    out: list[LabelEvent] = []
    for event, k, u in zip(source, keep_u, delay_u):
        if k >= config.labeled_fraction:
            continue
        days = sampler(float(u), config.mean_delay_days)
        out.append(
            LabelEvent(event.id, event.available_time + round(days * MS_PER_DAY), event.label)
        )
    out.sort(key=lambda e: e.available_time)
    logger.info(
        "kept %d of %d labels (fraction %.3f, mean delay %.2f days)",
        len(out),
        len(source),
        config.labeled_fraction,
        config.mean_delay_days,
    )
    return out


@dataclass
class JoinStep:
    """What became visible during one :meth:`JoinState.advance` call."""

    new_predictions: list[PredictionEvent] = field(default_factory=list)
    new_joined: list[JoinedExample] = field(default_factory=list)


class JoinState:
    """Two-stream merge keyed by prediction id.

    Predictions enter ``pending`` once their event time is reached; a label
    whose availability time is reached moves its prediction from ``pending``
    to joined.  A label that arrives before its prediction is held in
    ``waiting``.  A label available before its prediction's event time is
    rejected and counted in ``early_labels``, whichever order the clock sees
    the pair in.  Labels still waiting are orphans.
    """

    def __init__(
        self, predictions: Iterable[PredictionEvent], labels: Iterable[LabelEvent]
    ) -> None:
        self._predictions: Iterator[PredictionEvent] = iter(predictions)
        self._labels: Iterator[LabelEvent] = iter(labels)
        self._next_prediction: PredictionEvent | None = next(self._predictions, None)
        self._next_label: LabelEvent | None = next(self._labels, None)
        self.pending: dict[str, PredictionEvent] = {}
        self.waiting: dict[str, LabelEvent] = {}
        self.joined_ids: set[str] = set()
        self.duplicates = 0
        self.early_labels = 0
        self.watermark: int | None = None

    @property
    def unlabeled_count(self) -> int:
        return len(self.pending)

    @property
    def orphans(self) -> int:
        return len(self.waiting)

    def _reject_early(self, prediction: PredictionEvent, label: LabelEvent) -> bool:
        if label.available_time >= prediction.event_time:
            return False
        self.early_labels += 1
        logger.debug(
            "label %s available at %d before its prediction at %d",
            label.id,
            label.available_time,
            prediction.event_time,
        )
        return True

    def advance(self, t: int) -> JoinStep:
        """Consume both streams up to ``t`` inclusive."""

        if self.watermark is not None and t < self.watermark:
            raise ValueError(f"join watermark cannot move back ({t} < {self.watermark})")
        step = JoinStep()

        while self._next_prediction is not None and self._next_prediction.event_time <= t:
            prediction = self._next_prediction
            if prediction.id in self.pending or prediction.id in self.joined_ids:
                self.duplicates += 1
            else:
                self.pending[prediction.id] = prediction
                step.new_predictions.append(prediction)
                held = self.waiting.pop(prediction.id, None)
                if held is not None:
                    # held labels always predate the prediction
                    self._reject_early(prediction, held)
            self._next_prediction = next(self._predictions, None)

        while self._next_label is not None and self._next_label.available_time <= t:
            label = self._next_label
            prediction = self.pending.get(label.id)
            if prediction is not None:
                if not self._reject_early(prediction, label):
                    del self.pending[label.id]
                    self.joined_ids.add(label.id)
                    step.new_joined.append(JoinedExample.join(prediction, label))
            elif label.id in self.joined_ids or label.id in self.waiting:
                self.duplicates += 1
            else:
                self.waiting[label.id] = label
                logger.debug("label %s at %d has no prediction yet", label.id, label.available_time)
            self._next_label = next(self._labels, None)

        self.watermark = t
        return step


def join_at(
    t: int, predictions: Iterable[PredictionEvent], labels: Iterable[LabelEvent]
) -> tuple[list[JoinedExample], int]:
    """Return the examples observable at ``t`` and the unlabeled count."""

    state = JoinState(predictions, labels)
    step = state.advance(t)
    if state.orphans:
        logger.warning("%d orphan label(s) with no matching prediction", state.orphans)
    observed = sorted(step.new_joined, key=lambda e: (e.event_time, e.id))
    return observed, state.unlabeled_count


def join_by_id(
    predictions: Iterable[PredictionEvent], labels: Iterable[LabelEvent]
) -> list[JoinedExample]:
    """Join regardless of time, as for a fully labeled reference set.

    Predictions without a label are skipped; labels without a prediction
    are counted and logged.
    """

    by_id = {p.id: p for p in predictions}
    joined: list[JoinedExample] = []
    orphans = 0
    for label in labels:
        prediction = by_id.pop(label.id, None)
        if prediction is None:
            orphans += 1
            continue
        joined.append(JoinedExample.join(prediction, label))
    if orphans:
        logger.warning("%d orphan label(s) with no matching prediction", orphans)
    joined.sort(key=lambda e: (e.event_time, e.id))
    return joined


__all__ = [
    "sample_delay",
    "DelaySampler",
    "DELAY_FAMILIES",
    "DelayConfig",
    "simulate",
    "JoinStep",
    "JoinState",
    "join_at",
    "join_by_id",
]
