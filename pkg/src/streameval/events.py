"""Event vocabulary and line-delimited JSON readers for :mod:`streameval`.

Predictions and labels travel as one JSON object per line.  Timestamps are
RFC-3339 text in files and integer milliseconds since the UTC epoch in
memory.  The readers tolerate a bounded amount of disorder: records are held
in a small heap until nothing older can still arrive, then released in time
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import datetime as _dt
import heapq
import json
import logging
import re
from typing import Any, Callable, Iterable, Iterator, TextIO, TypeVar

logger = logging.getLogger(__name__)

MS_PER_SECOND = 1_000
MS_PER_MINUTE = 60 * MS_PER_SECOND
MS_PER_HOUR = 60 * MS_PER_MINUTE
MS_PER_DAY = 24 * MS_PER_HOUR

DEFAULT_REORDER_TOLERANCE_MS = MS_PER_HOUR

_EPOCH = _dt.datetime(1970, 1, 1, tzinfo=_dt.timezone.utc)
_DURATION_RE = re.compile(r"^\s*(\d+)\s*(ms|s|m|h|d)\s*$")
_UNIT_MS = {
    "ms": 1,
    "s": MS_PER_SECOND,
    "m": MS_PER_MINUTE,
    "h": MS_PER_HOUR,
    "d": MS_PER_DAY,
}


class ParseError(ValueError):
    """A record that does not match the stream schema."""

    def __init__(self, line: int, message: str, *, source: str = "<stream>") -> None:
        super().__init__(f"{source}:{line}: {message}")
        self.line = line
        self.source = source
        self.reason = message


class OrderingError(ValueError):
    """Time moved backwards further than the configured tolerance."""


@dataclass(frozen=True)
class PredictionEvent:
    """One scored inference."""

    id: str
    event_time: int
    score: float
    subgroup: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score!r} outside [0, 1]")


@dataclass(frozen=True)
class LabelEvent:
    """Ground truth for a prediction id and the time it became available."""

    id: str
    available_time: int
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise ValueError(f"label {self.label!r} not in {{0, 1}}")


@dataclass(frozen=True)
class JoinedExample:
    """A prediction paired with its (single) label."""

    id: str
    event_time: int
    score: float
    subgroup: str | None
    label: int
    available_time: int

    @classmethod
    def join(cls, prediction: PredictionEvent, label: LabelEvent) -> "JoinedExample":
        return cls(
            id=prediction.id,
            event_time=prediction.event_time,
            score=prediction.score,
            subgroup=prediction.subgroup,
            label=label.label,
            available_time=label.available_time,
        )


@dataclass
class ReadStats:
    """Counters filled in while a reader is consumed."""

    records: int = 0
    duplicates: int = 0
    duplicate_ids: list[str] = field(default_factory=list)


def parse_timestamp(text: str) -> int:
    """Return milliseconds since the epoch for RFC-3339 ``text``.

    A timezone designator is required.  Sub-millisecond digits are floored.
    """

    if not isinstance(text, str) or not text:
        raise ValueError("timestamp must be a non-empty string")
    try:
        value = _dt.datetime.fromisoformat(text.replace("z", "Z"))
    except ValueError as exc:
        raise ValueError(f"invalid RFC-3339 timestamp {text!r}") from exc
    if value.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no timezone")
    return (value - _EPOCH) // _dt.timedelta(milliseconds=1)


def format_timestamp(ms: int) -> str:
    """Render ``ms`` as ``YYYY-MM-DDTHH:MM:SS.mmmZ``."""

    value = _EPOCH + _dt.timedelta(milliseconds=ms)
    return f"{value:%Y-%m-%dT%H:%M:%S}.{ms % MS_PER_SECOND:03d}Z"


def parse_duration(text: str | int) -> int:
    """Convert ``"7d"``, ``"12h"``, ``"30m"``, ``"45s"`` or ``"500ms"`` to ms."""

    if isinstance(text, bool) or not isinstance(text, str):
        raise ValueError(f"duration must be text like '7d', got {text!r}")
    match = _DURATION_RE.match(text)
    if not match:
        raise ValueError(f"invalid duration {text!r}")
    return int(match.group(1)) * _UNIT_MS[match.group(2)]


def format_duration(ms: int) -> str:
    """Return the coarsest exact unit for ``ms`` (inverse of :func:`parse_duration`)."""

    for unit in ("d", "h", "m", "s"):
        if ms % _UNIT_MS[unit] == 0:
            return f"{ms // _UNIT_MS[unit]}{unit}"
    return f"{ms}ms"


def _decode(line: bytes | str) -> str:
    if isinstance(line, bytes):
        return line.decode("utf-8")
    return line


def _load_object(text: str) -> dict[str, Any]:
    obj = json.loads(text)
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    return obj


def _require_str(obj: dict[str, Any], key: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise ValueError(f"'{key}' must be a non-empty string")
    return value


def _prediction_from_obj(obj: dict[str, Any]) -> PredictionEvent:
    event_id = _require_str(obj, "id")
    ts = parse_timestamp(_require_str(obj, "ts"))
    score = obj.get("score")
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise ValueError("'score' must be a number")
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"'score' {score!r} outside [0, 1]")
    subgroup = obj.get("subgroup")
    if subgroup is not None and not isinstance(subgroup, str):
        raise ValueError("'subgroup' must be a string")
    return PredictionEvent(event_id, ts, float(score), subgroup)


def _label_from_obj(obj: dict[str, Any]) -> LabelEvent:
    event_id = _require_str(obj, "id")
    ts = parse_timestamp(_require_str(obj, "ts"))
    label = obj.get("label")
    if isinstance(label, bool) or not isinstance(label, int) or label not in (0, 1):
        raise ValueError(f"'label' {label!r} must be the integer 0 or 1")
    return LabelEvent(event_id, ts, label)


E = TypeVar("E", PredictionEvent, LabelEvent)


def _read_ordered(
    source: Iterable[bytes | str],
    build: Callable[[dict[str, Any]], E],
    time_of: Callable[[E], int],
    *,
    reorder_tolerance_ms: int,
    stats: ReadStats | None,
    name: str,
) -> Iterator[E]:
    if reorder_tolerance_ms < 0:
        raise ValueError("reorder tolerance must be >= 0")
    stats = stats if stats is not None else ReadStats()
    seen: set[str] = set()
    heap: list[tuple[int, int, E]] = []
    max_seen: int | None = None

    for lineno, raw in enumerate(source, start=1):
        try:
            text = _decode(raw).strip()
            if not text:
                continue
            event = build(_load_object(text))
        except ValueError as exc:
            raise ParseError(lineno, str(exc), source=name) from exc
        stats.records += 1
        if event.id in seen:
            stats.duplicates += 1
            stats.duplicate_ids.append(event.id)
            logger.debug("%s:%d: duplicate id %s dropped", name, lineno, event.id)
            continue
        seen.add(event.id)

        ts = time_of(event)
        if max_seen is not None and ts < max_seen - reorder_tolerance_ms:
            raise OrderingError(
                f"{name}:{lineno}: record at {format_timestamp(ts)} is older than "
                f"the reorder horizon {format_timestamp(max_seen - reorder_tolerance_ms)}"
            )
        max_seen = ts if max_seen is None else max(max_seen, ts)
        heapq.heappush(heap, (ts, lineno, event))
        horizon = max_seen - reorder_tolerance_ms
        while heap and heap[0][0] <= horizon:
            yield heapq.heappop(heap)[2]

    while heap:
        yield heapq.heappop(heap)[2]

    if stats.duplicates:
        logger.warning("%s: dropped %d duplicate id(s)", name, stats.duplicates)


def read_prediction_stream(
    source: Iterable[bytes | str],
    *,
    reorder_tolerance_ms: int = DEFAULT_REORDER_TOLERANCE_MS,
    stats: ReadStats | None = None,
    name: str = "predictions",
) -> Iterator[PredictionEvent]:
    """Yield :class:`PredictionEvent` objects in nondecreasing event time.

    ``source`` is any iterable of lines (a file opened in binary or text
    mode works).  Malformed lines raise :class:`ParseError`; records older
    than the reorder horizon raise :class:`OrderingError`.  Duplicate ids are
    dropped (first wins) and counted in ``stats``.
    """

    return _read_ordered(
        source,
        _prediction_from_obj,
        lambda e: e.event_time,
        reorder_tolerance_ms=reorder_tolerance_ms,
        stats=stats,
        name=name,
    )


def read_label_stream(
    source: Iterable[bytes | str],
    *,
    reorder_tolerance_ms: int = DEFAULT_REORDER_TOLERANCE_MS,
    stats: ReadStats | None = None,
    name: str = "labels",
) -> Iterator[LabelEvent]:
    """Yield :class:`LabelEvent` objects in nondecreasing availability time."""

    return _read_ordered(
        source,
        _label_from_obj,
        lambda e: e.available_time,
        reorder_tolerance_ms=reorder_tolerance_ms,
        stats=stats,
        name=name,
    )


def prediction_to_json(event: PredictionEvent) -> str:
    obj: dict[str, Any] = {
        "id": event.id,
        "ts": format_timestamp(event.event_time),
        "score": event.score,
    }
    if event.subgroup is not None:
        obj["subgroup"] = event.subgroup
    return json.dumps(obj, separators=(",", ":"))


def label_to_json(event: LabelEvent) -> str:
    obj = {
        "id": event.id,
        "ts": format_timestamp(event.available_time),
        "label": event.label,
    }
    return json.dumps(obj, separators=(",", ":"))


def write_prediction_stream(events: Iterable[PredictionEvent], sink: TextIO) -> int:
    """Write ``events`` to ``sink`` one per line; return the count."""

    count = 0
    for event in events:
        sink.write(prediction_to_json(event) + "\n")
        count += 1
    return count


def write_label_stream(events: Iterable[LabelEvent], sink: TextIO) -> int:
    """Write ``events`` to ``sink`` one per line; return the count."""

    count = 0
    for event in events:
        sink.write(label_to_json(event) + "\n")
        count += 1
    return count


__all__ = [
    "MS_PER_SECOND",
    "MS_PER_MINUTE",
    "MS_PER_HOUR",
    "MS_PER_DAY",
    "DEFAULT_REORDER_TOLERANCE_MS",
    "ParseError",
    "OrderingError",
    "PredictionEvent",
    "LabelEvent",
    "JoinedExample",
    "ReadStats",
    "parse_timestamp",
    "format_timestamp",
    "parse_duration",
    "format_duration",
    "read_prediction_stream",
    "read_label_stream",
    "prediction_to_json",
    "label_to_json",
    "write_prediction_stream",
    "write_label_stream",
]
