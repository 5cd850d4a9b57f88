"""Deterministic synthetic prediction/label streams with scheduled shifts.

Each subgroup has a mix weight, a positive rate and a correctness rate.
Scores are drawn from the half of ``[0, 1)`` that rounds to the label when
the prediction is correct and from the other half otherwise, so the
correctness rate is exactly the subgroup's expected accuracy.  Shifts swap
parameters instantaneously at their scheduled times.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import datetime as _dt
import logging
import math
from typing import Callable, Iterator, Mapping, Sequence, TextIO

import numpy as np

from .events import (
    MS_PER_DAY,
    LabelEvent,
    PredictionEvent,
    parse_timestamp,
    prediction_to_json,
    label_to_json,
)

logger = logging.getLogger(__name__)

_PARAMS = ("p_positive", "p_correct")


@dataclass(frozen=True)
class SubgroupSpec:
    key: str
    mix_weight: float
    p_positive: float
    p_correct: float


@dataclass(frozen=True)
class Shift:
    """Parameter overrides taking effect at ``at`` (ms).

    ``mix`` replaces mix weights by key; ``groups`` maps a key to
    ``{"p_positive": x, "p_correct": y}`` overrides.
    """

    at: int
    mix: Mapping[str, float] = field(default_factory=dict)
    groups: Mapping[str, Mapping[str, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    start: int
    end: int
    events_per_day: int
    subgroups: tuple[SubgroupSpec, ...]
    shifts: tuple[Shift, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        validate_scenario(self)

    @property
    def days(self) -> int:
        return -(-(self.end - self.start) // MS_PER_DAY)


@dataclass(frozen=True)
class GeneratedPair:
    prediction: PredictionEvent
    label: LabelEvent


def _check_regime(groups: Sequence[SubgroupSpec], where: str) -> None:
    total = math.fsum(g.mix_weight for g in groups)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"{where}: mix weights sum to {total}, expected 1")
    for g in groups:
        for name in ("mix_weight", *_PARAMS):
            value = getattr(g, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{where}: {g.key}.{name}={value} outside [0, 1]")


def _override(value: object, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _apply(groups: Sequence[SubgroupSpec], shift: Shift) -> tuple[SubgroupSpec, ...]:
    known = {g.key for g in groups}
    unknown = (set(shift.mix) | set(shift.groups)) - known
    if unknown:
        raise ValueError(f"shift at {shift.at}: unknown subgroup(s) {sorted(unknown)}")
    out = []
    for g in groups:
        changes: dict[str, float] = {}
        if g.key in shift.mix:
            changes["mix_weight"] = _override(shift.mix[g.key], f"shift at {shift.at}: {g.key}.mix_weight")
        for name, value in shift.groups.get(g.key, {}).items():
            if name not in _PARAMS:
                raise ValueError(f"shift at {shift.at}: unknown parameter {name!r}")
            changes[name] = _override(value, f"shift at {shift.at}: {g.key}.{name}")
        out.append(replace(g, **changes))
    return tuple(out)


def regimes(config: ScenarioConfig) -> list[tuple[int, tuple[SubgroupSpec, ...]]]:
    """Return ``(effective_from, subgroups)`` pairs in time order."""

    current = tuple(config.subgroups)
    out = [(config.start, current)]
    for shift in sorted(config.shifts, key=lambda s: s.at):
        current = _apply(current, shift)
        out.append((shift.at, current))
    return out


def validate_scenario(config: ScenarioConfig) -> None:
    if config.end <= config.start:
        raise ValueError("scenario end must be after start")
    if config.events_per_day < 1:
        raise ValueError("events_per_day must be >= 1")
    if not config.subgroups:
        raise ValueError("scenario needs at least one subgroup")
    keys = [g.key for g in config.subgroups]
    if len(set(keys)) != len(keys):
        raise ValueError("subgroup keys must be unique")
    times = [s.at for s in config.shifts]
    if len(set(times)) != len(times):
        raise ValueError("overlapping shift times")
    for i, (at, groups) in enumerate(regimes(config)):
        _check_regime(groups, "subgroups" if i == 0 else f"shift at {at}")


def _draw(
    rng: np.random.Generator,
    times: np.ndarray,
    groups: tuple[SubgroupSpec, ...],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = times.size
    mix = np.array([g.mix_weight for g in groups])
    which = rng.choice(len(groups), size=n, p=mix / mix.sum())
    p_pos = np.array([g.p_positive for g in groups])[which]
    p_cor = np.array([g.p_correct for g in groups])[which]
    labels = (rng.random(n) < p_pos).astype(np.int64)
    correct = rng.random(n) < p_cor
    offset = rng.random(n) * 0.5
    # upper half rounds to 1, lower half to 0
    upper = np.where(correct, labels == 1, labels == 0)
    scores = np.where(upper, 0.5 + offset, offset)
    return which, labels, scores


def generate(config: ScenarioConfig) -> Iterator[GeneratedPair]:
    """Yield prediction/label pairs in event-time order.

    ``events_per_day`` events are spread evenly across each day from
    ``start`` up to ``end``.  Labels carry the prediction's event time.
    """

    rng = np.random.default_rng(config.seed)
    schedule = regimes(config)
    bounds = [at for at, _ in schedule[1:]] + [config.end]
    serial = 0
    for day in range(config.days):
        day_start = config.start + day * MS_PER_DAY
        offsets = (np.arange(config.events_per_day, dtype=np.int64) * MS_PER_DAY) // config.events_per_day
        times = day_start + offsets
        times = times[times < config.end]
        for (regime_start, groups), regime_end in zip(schedule, bounds):
            mask = (times >= regime_start) & (times < regime_end)
            if not mask.any():
                continue
            seg = times[mask]
            which, labels, scores = _draw(rng, seg, groups)
            for ts, g, y, s in zip(seg.tolist(), which.tolist(), labels.tolist(), scores.tolist()):
                serial += 1
                event_id = f"e{serial:09d}"
                yield GeneratedPair(
                    PredictionEvent(event_id, ts, s, groups[g].key),
                    LabelEvent(event_id, ts, y),
                )


def write_pairs(pairs: Iterator[GeneratedPair], predictions: TextIO, labels: TextIO) -> int:
    """Write pairs to the predictions and labels sinks; return the count."""

    count = 0
    for pair in pairs:
        predictions.write(prediction_to_json(pair.prediction) + "\n")
        labels.write(label_to_json(pair.label) + "\n")
        count += 1
    return count


TAXI_START = "2020-02-01T00:00:00Z"
SHIFT_DAY = 45


def taxi_like_scenario(*, events_per_day: int = 4000, seed: int = 2020) -> ScenarioConfig:
    """A 150-day scenario with a class-balance and a concept shift on day 45.

    Baseline accuracy is about 0.745.  On day 45 every subgroup's positive
    rate halves and the ``midtown`` subgroup's correctness drops from 0.8 to
    0.4.
    """

    start = parse_timestamp(TAXI_START)
    groups = (
        SubgroupSpec("midtown", 0.5, 0.6, 0.8),
        SubgroupSpec("downtown", 0.3, 0.55, 0.75),
        SubgroupSpec("outer", 0.2, 0.4, 0.6),
    )
    shift = Shift(
        at=start + SHIFT_DAY * MS_PER_DAY,
        groups={
            "midtown": {"p_positive": 0.3, "p_correct": 0.4},
            "downtown": {"p_positive": 0.275},
            "outer": {"p_positive": 0.2},
        },
    )
    return ScenarioConfig(
        start=start,
        end=start + 150 * MS_PER_DAY,
        events_per_day=events_per_day,
        subgroups=groups,
        shifts=(shift,),
        seed=seed,
    )


def covariate_shift_scenario(
    *, days: int = 28, events_per_day: int = 15000, seed: int = 7
) -> ScenarioConfig:
    """Only the subgroup mix shifts (halfway through); correctness is fixed."""

    start = parse_timestamp(TAXI_START)
    groups = (
        SubgroupSpec("midtown", 0.6, 0.6, 0.85),
        SubgroupSpec("downtown", 0.3, 0.5, 0.7),
        SubgroupSpec("outer", 0.1, 0.4, 0.55),
    )
    shift = Shift(
        at=start + (days // 2) * MS_PER_DAY,
        mix={"midtown": 0.2, "downtown": 0.3, "outer": 0.5},
    )
    return ScenarioConfig(
        start=start,
        end=start + days * MS_PER_DAY,
        events_per_day=events_per_day,
        subgroups=groups,
        shifts=(shift,),
        seed=seed,
    )


def reference_period(config: ScenarioConfig, days: int) -> ScenarioConfig:
    """The ``days`` before ``config.start`` under the initial parameters.

    Stands in for the training month that precedes deployment.
    """

    start = config.start - days * MS_PER_DAY
    return replace(config, start=start, end=config.start, shifts=(), seed=config.seed + 1)


def describe(config: ScenarioConfig) -> str:
    start = _dt.datetime.fromtimestamp(config.start / 1000, tz=_dt.timezone.utc)
    return (
        f"{config.days} days from {start:%Y-%m-%d}, {config.events_per_day}/day, "
        f"{len(config.subgroups)} subgroups, {len(config.shifts)} shift(s)"
    )


BUILTIN_SCENARIOS: dict[str, Callable[..., ScenarioConfig]] = {
    "taxi-like": taxi_like_scenario,
    "covariate-shift": covariate_shift_scenario,
}


__all__ = [
    "SubgroupSpec",
    "Shift",
    "ScenarioConfig",
    "GeneratedPair",
    "regimes",
    "validate_scenario",
    "generate",
    "write_pairs",
    "taxi_like_scenario",
    "covariate_shift_scenario",
    "reference_period",
    "describe",
    "BUILTIN_SCENARIOS",
    "SHIFT_DAY",
]
