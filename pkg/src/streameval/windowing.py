"""Window definitions and incremental window accumulators.

Three window kinds are supported:

* ``cumulative``: everything from the start of the stream up to ``t``;
* ``sliding_duration``: items with ``event_time`` in ``(t - d, t]``;
* ``sliding_count``: the ``n`` most recent items at or before ``t``.

Membership is always keyed by the item's ``event_time``.  Items may reach an
accumulator out of event-time order (a late label belongs in the middle of a
window), so sliding windows keep their members in a min-heap and evict from
the oldest end.
"""

from __future__ import annotations

from dataclasses import dataclass
import heapq
from typing import Generic, Iterable, Protocol, TypeVar

import numpy as np

from .events import OrderingError, format_duration

CUMULATIVE = "cumulative"
SLIDING_DURATION = "sliding_duration"
SLIDING_COUNT = "sliding_count"
WINDOW_KINDS = (CUMULATIVE, SLIDING_DURATION, SLIDING_COUNT)

DEFAULT_RESERVOIR_SIZE = 10_000


class Timestamped(Protocol):
    @property
    def id(self) -> str: ...

    @property
    def event_time(self) -> int: ...


T = TypeVar("T", bound=Timestamped)
T_contra = TypeVar("T_contra", contravariant=True)


class WindowStats(Protocol[T_contra]):
    """Sufficient statistics kept in lockstep with window membership."""

    def add(self, item: T_contra) -> None: ...

    def remove(self, item: T_contra) -> None: ...


@dataclass(frozen=True)
class WindowSpec:
    """A window kind, its size and the evaluation cadence.

    ``size`` is milliseconds for ``sliding_duration``, an item count for
    ``sliding_count`` and ``None`` for ``cumulative``.
    """

    kind: str
    size: int | None
    cadence_ms: int

    def __post_init__(self) -> None:
        if self.kind not in WINDOW_KINDS:
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.cadence_ms <= 0:
            raise ValueError("cadence must be > 0")
        if self.kind == CUMULATIVE:
            if self.size is not None:
                raise ValueError("cumulative windows take no size")
        elif self.size is None or self.size < 1:
            raise ValueError(f"{self.kind} size must be >= 1")

    @classmethod
    def cumulative(cls, cadence_ms: int) -> "WindowSpec":
        return cls(CUMULATIVE, None, cadence_ms)

    @classmethod
    def sliding_duration(cls, duration_ms: int, cadence_ms: int) -> "WindowSpec":
        return cls(SLIDING_DURATION, duration_ms, cadence_ms)

    @classmethod
    def sliding_count(cls, count: int, cadence_ms: int) -> "WindowSpec":
        return cls(SLIDING_COUNT, count, cadence_ms)

    @property
    def size_label(self) -> str:
        if self.kind == SLIDING_DURATION:
            assert self.size is not None
            return format_duration(self.size)
        if self.kind == SLIDING_COUNT:
            return str(self.size)
        return ""

    @property
    def cadence_label(self) -> str:
        return format_duration(self.cadence_ms)

    def describe(self) -> str:
        size = self.size_label
        return f"{self.kind}:{size}@{self.cadence_label}" if size else f"{self.kind}@{self.cadence_label}"


def evaluation_times(start: int, end: int, spec: WindowSpec) -> list[int]:
    """Return the evaluation grid for a stream spanning ``[start, end]``.

    Boundaries are multiples of the cadence since the UTC epoch.  The grid
    starts at the first boundary ``>= start`` and ends at the first boundary
    ``>= end``.
    """

    if start > end:
        raise ValueError("start must be <= end")
    step = spec.cadence_ms
    first = -(-start // step) * step
    last = -(-end // step) * step
    return list(range(first, last + 1, step))


class WindowAccumulator(Generic[T]):
    """Incremental membership for one :class:`WindowSpec`.

    ``stats`` (optional) receives ``add``/``remove`` calls for every item
    entering or leaving the window.  Cumulative windows do not retain their
    members unless ``retain_members`` is set; they keep a reservoir sample of
    ``reservoir_size`` items instead, which becomes approximate once more
    items than that have been seen. A reservoir size of 0 disables sampling.
    """

    def __init__(
        self,
        spec: WindowSpec,
        *,
        stats: WindowStats[T] | None = None,
        retain_members: bool | None = None,
        reservoir_size: int = DEFAULT_RESERVOIR_SIZE,
        seed: int = 0,
    ) -> None:
        if reservoir_size < 0:
            raise ValueError("reservoir_size must be >= 0")
        self.spec = spec
        self.stats = stats
        self.end: int | None = None
        self.count = 0
        self._heap: list[tuple[int, str, T]] = []
        self._retain = spec.kind != CUMULATIVE or bool(retain_members)
        self._all: list[T] = []
        self._reservoir: list[T] = []
        self._reservoir_size = reservoir_size
        self._rng = np.random.default_rng(seed)

    @property
    def retains_members(self) -> bool:
        return self._retain

    def advance(self, new_items: Iterable[T], t: int) -> "WindowAccumulator[T]":
        """Admit ``new_items`` and move the window end to ``t``."""

        if self.end is not None and t < self.end:
            raise OrderingError(f"time regression: {t} < {self.end}")
        for item in new_items:
            if item.event_time > t:
                raise OrderingError(
                    f"item {item.id} at {item.event_time} is after window end {t}"
                )
            self._admit(item, t)
        self._evict(t)
        self.end = t
        return self

    def _admit(self, item: T, t: int) -> None:
        kind = self.spec.kind
        if kind == CUMULATIVE:
            self.count += 1
            if self.stats is not None:
                self.stats.add(item)
            if self._retain:
                self._all.append(item)
            self._offer_reservoir(item)
            return
        if kind == SLIDING_DURATION:
            assert self.spec.size is not None
            if item.event_time <= t - self.spec.size:
                return
        heapq.heappush(self._heap, (item.event_time, item.id, item))
        self.count += 1
        if self.stats is not None:
            self.stats.add(item)

    def _evict(self, t: int) -> None:
        kind = self.spec.kind
        size = self.spec.size
        if kind == SLIDING_DURATION:
            assert size is not None
            while self._heap and self._heap[0][0] <= t - size:
                self._drop()
        elif kind == SLIDING_COUNT:
            assert size is not None
            while len(self._heap) > size:
                self._drop()

    def _drop(self) -> None:
        _, _, item = heapq.heappop(self._heap)
        self.count -= 1
        if self.stats is not None:
            self.stats.remove(item)

    def _offer_reservoir(self, item: T) -> None:
        if self._reservoir_size == 0:
            return
        if len(self._reservoir) < self._reservoir_size:
            self._reservoir.append(item)
            return
        slot = int(self._rng.integers(0, self.count))
        if slot < self._reservoir_size:
            self._reservoir[slot] = item

    def members(self) -> list[T]:
        """Current members sorted by ``(event_time, id)``."""

        if self.spec.kind == CUMULATIVE:
            if not self._retain:
                raise RuntimeError("cumulative accumulator does not retain members")
            return sorted(self._all, key=lambda i: (i.event_time, i.id))
        return [item for _, _, item in sorted(self._heap, key=lambda e: (e[0], e[1]))]

    def sample(self) -> tuple[list[T], bool]:
        """Return ``(items, approximate)`` for distribution metrics."""

        if self.spec.kind == CUMULATIVE and not self._retain:
            return list(self._reservoir), self.count > self._reservoir_size
        if self.spec.kind == CUMULATIVE:
            return list(self._all), False
        return [item for _, _, item in self._heap], False


def advance(
    acc: WindowAccumulator[T], new_items: Iterable[T], t: int
) -> WindowAccumulator[T]:
    """Functional form of :meth:`WindowAccumulator.advance`."""

    return acc.advance(new_items, t)


__all__ = [
    "CUMULATIVE",
    "SLIDING_DURATION",
    "SLIDING_COUNT",
    "WINDOW_KINDS",
    "DEFAULT_RESERVOIR_SIZE",
    "WindowSpec",
    "WindowStats",
    "WindowAccumulator",
    "evaluation_times",
    "advance",
]
