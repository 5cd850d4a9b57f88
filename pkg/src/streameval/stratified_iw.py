"""Stratified importance-weighted accuracy estimates.

A :class:`SubgroupProfile` records the accuracy of each subgroup on a
labeled reference set.  On live traffic the estimate re-weights those
accuracies by the live subgroup mix, which needs no labels.  Once labels
arrive, the gap between the estimate and the realized accuracy flags a
change in the label mechanism rather than in the input mix.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Mapping

from .events import JoinedExample, PredictionEvent
from .metrics import MetricPoint, is_correct

logger = logging.getLogger(__name__)

OTHER = "__other__"
DEFAULT_MIN_COUNT = 30


class EmptyReferenceError(ValueError):
    """The reference set has no examples."""


class InsufficientLabelsError(ValueError):
    """The realized metric has no labeled support."""


class WindowMismatchError(ValueError):
    """Estimate and realized metric describe different windows."""


@dataclass(frozen=True)
class GroupStats:
    accuracy: float
    count: int


@dataclass(frozen=True)
class SubgroupProfile:
    """Reference accuracy per subgroup.

    ``folded`` lists subgroup keys whose reference count fell below
    ``min_count`` and were merged into the ``"__other__"`` bucket.
    """

    groups: Mapping[str, GroupStats]
    global_accuracy: float
    total_count: int
    min_count: int = DEFAULT_MIN_COUNT
    folded: frozenset[str] = field(default_factory=frozenset)

    def lookup(self, key: str | None) -> GroupStats | None:
        """Return the stats used for live key ``key`` or ``None`` if unseen."""

        if key is not None and key in self.groups:
            return self.groups[key]
        if key is None or key in self.folded:
            return self.groups.get(OTHER)
        return None


@dataclass(frozen=True)
class IwEstimate:
    window_end: int | None
    estimate: float | None
    coverage: float | None
    support: int

    def as_points(self) -> list[MetricPoint]:
        return [
            MetricPoint(self.window_end, "iw_estimate", self.estimate, self.support),
            MetricPoint(self.window_end, "iw_coverage", self.coverage, self.support),
        ]


def build_profile(
    reference: Iterable[JoinedExample], min_count: int = DEFAULT_MIN_COUNT
) -> SubgroupProfile:
    """Build a :class:`SubgroupProfile` from labeled reference examples.

    Examples without a subgroup count towards ``"__other__"``; subgroups
    with fewer than ``min_count`` examples are folded into it as well.
    """

    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    totals: Counter[str] = Counter()
    hits: Counter[str] = Counter()
    for example in reference:
        key = example.subgroup if example.subgroup is not None else OTHER
        totals[key] += 1
        if is_correct(example.score, example.label):
            hits[key] += 1
    if not totals:
        raise EmptyReferenceError("empty reference")

    folded = {k for k, n in totals.items() if n < min_count and k != OTHER}
    merged_total: Counter[str] = Counter()
    merged_hits: Counter[str] = Counter()
    for key, n in totals.items():
        target = OTHER if key in folded else key
        merged_total[target] += n
        merged_hits[target] += hits[key]

    groups = {
        key: GroupStats(merged_hits[key] / n, n) for key, n in sorted(merged_total.items())
    }
    total = sum(merged_total.values())
    if folded:
        logger.info("folded %d subgroup(s) under %d examples into %s", len(folded), min_count, OTHER)
    return SubgroupProfile(
        groups=groups,
        global_accuracy=sum(merged_hits.values()) / total,
        total_count=total,
        min_count=min_count,
        folded=frozenset(folded),
    )


class SubgroupCounts:
    """Live subgroup counts maintained as window statistics."""

    def __init__(self) -> None:
        self.counts: Counter[str | None] = Counter()

    def add(self, item: PredictionEvent) -> None:
        self.counts[item.subgroup] += 1

    def remove(self, item: PredictionEvent) -> None:
        self.counts[item.subgroup] -= 1
        if self.counts[item.subgroup] <= 0:
            del self.counts[item.subgroup]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def iw_estimate_from_counts(
    counts: Mapping[str | None, int],
    profile: SubgroupProfile,
    window_end: int | None = None,
) -> IwEstimate:
    """Weight reference accuracies by live subgroup ``counts``."""

    total = sum(counts.values())
    if total == 0:
        return IwEstimate(window_end, None, None, 0)
    terms: list[float] = []
    covered = 0
    for key, n in counts.items():
        stats = profile.lookup(key)
        if stats is None:
            terms.append(n * profile.global_accuracy)
        else:
            terms.append(n * stats.accuracy)
            covered += n
    return IwEstimate(window_end, math.fsum(terms) / total, covered / total, total)


def iw_estimate(
    live: Iterable[PredictionEvent],
    profile: SubgroupProfile,
    window_end: int | None = None,
) -> IwEstimate:
    """IW accuracy estimate over unlabeled live predictions."""

    counts: Counter[str | None] = Counter(p.subgroup for p in live)
    return iw_estimate_from_counts(counts, profile, window_end)


def iw_difference(estimate: IwEstimate, realized: MetricPoint) -> float:
    """Return ``estimate - realized``.

    Positive values mean the model does worse than its reference accuracy
    under the live subgroup mix would predict.
    """

    if estimate.window_end != realized.window_end:
        raise WindowMismatchError(
            f"estimate window {estimate.window_end} != realized window {realized.window_end}"
        )
    if realized.value is None or realized.support < 1:
        raise InsufficientLabelsError("insufficient labels for realized accuracy")
    if estimate.estimate is None:
        raise InsufficientLabelsError("no live predictions for the estimate")
    return estimate.estimate - realized.value


def profile_to_dict(profile: SubgroupProfile) -> dict[str, Any]:
    return {
        "groups": {
            key: {"accuracy": g.accuracy, "count": g.count}
            for key, g in sorted(profile.groups.items())
        },
        "global": {"accuracy": profile.global_accuracy, "count": profile.total_count},
        "min_count": profile.min_count,
        "folded": sorted(profile.folded),
    }


def _group_from(obj: Any, where: str) -> GroupStats:
    if not isinstance(obj, dict):
        raise ValueError(f"{where} must be an object")
    acc = obj.get("accuracy")
    count = obj.get("count")
    if isinstance(acc, bool) or not isinstance(acc, (int, float)) or not 0.0 <= acc <= 1.0:
        raise ValueError(f"{where}.accuracy must be a number in [0, 1]")
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ValueError(f"{where}.count must be a positive integer")
    return GroupStats(float(acc), count)


def profile_from_dict(data: Any) -> SubgroupProfile:
    """Validate and load a profile document."""

    if not isinstance(data, dict):
        raise ValueError("profile must be a JSON object")
    groups_raw = data.get("groups")
    if not isinstance(groups_raw, dict) or not groups_raw:
        raise ValueError("profile.groups must be a non-empty object")
    groups = {str(k): _group_from(v, f"groups.{k}") for k, v in groups_raw.items()}
    glob = _group_from(data.get("global"), "global")
    min_count = data.get("min_count", DEFAULT_MIN_COUNT)
    if isinstance(min_count, bool) or not isinstance(min_count, int) or min_count < 1:
        raise ValueError("min_count must be a positive integer")
    folded = data.get("folded", [])
    if not isinstance(folded, list) or not all(isinstance(k, str) for k in folded):
        raise ValueError("folded must be a list of strings")
    return SubgroupProfile(
        groups=groups,
        global_accuracy=glob.accuracy,
        total_count=glob.count,
        min_count=min_count,
        folded=frozenset(folded),
    )


def save_profile(profile: SubgroupProfile, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(profile_to_dict(profile), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_profile(path: str | Path) -> SubgroupProfile:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON") from exc
    return profile_from_dict(data)


__all__ = [
    "OTHER",
    "DEFAULT_MIN_COUNT",
    "EmptyReferenceError",
    "InsufficientLabelsError",
    "WindowMismatchError",
    "GroupStats",
    "SubgroupProfile",
    "IwEstimate",
    "SubgroupCounts",
    "build_profile",
    "iw_estimate",
    "iw_estimate_from_counts",
    "iw_difference",
    "profile_to_dict",
    "profile_from_dict",
    "save_profile",
    "load_profile",
]
