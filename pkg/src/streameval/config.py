"""JSON run and scenario configuration for :mod:`streameval`.

Config documents carry ``"version": 1``.  Every validation failure raises
:class:`ConfigError` naming the offending key path, e.g. ``windows[0].size``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Iterable

from .events import DEFAULT_REORDER_TOLERANCE_MS, parse_duration, parse_timestamp
from .label_delay import DELAY_FAMILIES, DelayConfig
from .metrics import (
    ACCURACY,
    DEFAULT_PERCENTILE_LEVELS,
    F1,
    LABELED_FRACTION,
    POSITIVE_FRACTION,
    PRECISION,
    RECALL,
)
from .stratified_iw import DEFAULT_MIN_COUNT
from .synth import ScenarioConfig, Shift, SubgroupSpec
from .windowing import CUMULATIVE, SLIDING_COUNT, SLIDING_DURATION, WINDOW_KINDS, WindowSpec

SCHEMA_VERSION = 1
LOSS_PERCENTILES = "loss_percentiles"
METRIC_NAMES = (
    ACCURACY,
    PRECISION,
    RECALL,
    F1,
    POSITIVE_FRACTION,
    LABELED_FRACTION,
    LOSS_PERCENTILES,
)
DEFAULT_METRICS = (ACCURACY, POSITIVE_FRACTION, LOSS_PERCENTILES)
DEFAULT_MIN_SUPPORT = 30
DEFAULT_ALERT_THRESHOLD = 0.05

_RUN_KEYS = (
    "version",
    "predictions",
    "labels",
    "output",
    "windows",
    "metrics",
    "percentile_levels",
    "delay",
    "iw",
    "reorder_tolerance",
    "seed",
)
_WINDOW_KEYS = ("kind", "size", "cadence")
_DELAY_KEYS = ("mean_days", "labeled_fraction", "seed", "family")
_IW_KEYS = ("profile", "reference", "min_count", "min_support", "alert_threshold")
_SCENARIO_KEYS = ("version", "start", "end", "events_per_day", "seed", "subgroups", "shifts")
_SUBGROUP_KEYS = ("key", "mix_weight", "p_positive", "p_correct")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the path of the offending entry."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


def log_level() -> str:
    """Return the CLI log level (``STREAMEVAL_LOG_LEVEL``, default WARNING)."""
    level = os.getenv("STREAMEVAL_LOG_LEVEL", "WARNING").strip().upper()
    if level not in logging.getLevelNamesMapping():
        raise ConfigError("STREAMEVAL_LOG_LEVEL", f"unknown log level {level!r}")
    return level


def default_reorder_tolerance_ms() -> int:
    """Return the reader reorder tolerance from ``STREAMEVAL_REORDER_TOLERANCE``."""
    raw = os.getenv("STREAMEVAL_REORDER_TOLERANCE")
    if not raw:
        return DEFAULT_REORDER_TOLERANCE_MS
    try:
        return parse_duration(raw)
    except ValueError as exc:
        raise ConfigError("STREAMEVAL_REORDER_TOLERANCE", str(exc)) from exc


@dataclass(frozen=True)
class IwConfig:
    profile: str | None = None
    reference_predictions: str | None = None
    reference_labels: str | None = None
    min_count: int = DEFAULT_MIN_COUNT
    min_support: int = DEFAULT_MIN_SUPPORT
    alert_threshold: float = DEFAULT_ALERT_THRESHOLD


@dataclass(frozen=True)
class EvalSettings:
    """Everything :func:`streameval.engine.evaluate` needs besides the data."""

    windows: tuple[WindowSpec, ...]
    metrics: tuple[str, ...] = DEFAULT_METRICS
    percentile_levels: tuple[int, ...] = DEFAULT_PERCENTILE_LEVELS
    min_support: int = DEFAULT_MIN_SUPPORT
    alert_threshold: float = DEFAULT_ALERT_THRESHOLD
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self) -> None:
        if not self.windows:
            raise ConfigError("windows", "at least one window is required")
        if not self.metrics:
            raise ConfigError("metrics", "at least one metric is required")


@dataclass(frozen=True)
class RunConfig:
    predictions: str
    labels: str
    output: str
    settings: EvalSettings
    delay: DelayConfig | None = None
    iw: IwConfig | None = None
    reorder_tolerance_ms: int = DEFAULT_REORDER_TOLERANCE_MS
    raw: dict[str, Any] = field(default_factory=dict, compare=False)


def _get(obj: dict[str, Any], key: str, where: str, kind: type | tuple[type, ...], default: Any = ...) -> Any:
    path = f"{where}.{key}" if where else key
    if key not in obj:
        if default is ...:
            raise ConfigError(path, "missing required key")
        return default
    value = obj[key]
    if isinstance(value, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,)):
        raise ConfigError(path, f"expected {_kind_name(kind)}, got bool")
    if not isinstance(value, kind):
        raise ConfigError(path, f"expected {_kind_name(kind)}, got {type(value).__name__}")
    return value


def _check_keys(obj: dict[str, Any], allowed: Iterable[str], where: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        key = unknown[0]
        path = f"{where}.{key}" if where else key
        raise ConfigError(path, f"unknown key(s) {', '.join(repr(k) for k in unknown)}")


def _kind_name(kind: type | tuple[type, ...]) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _check_version(data: Any, where: str = "") -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(where or "<root>", "config must be a JSON object")
    version = _get(data, "version", where, int)
    if version != SCHEMA_VERSION:
        raise ConfigError("version", f"unsupported version {version}, expected {SCHEMA_VERSION}")
    return data


def _duration(value: Any, path: str) -> int:
    try:
        ms = parse_duration(value)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    if ms <= 0:
        raise ConfigError(path, "duration must be > 0")
    return ms


def window_spec_from_dict(obj: Any, where: str) -> WindowSpec:
    if not isinstance(obj, dict):
        raise ConfigError(where, "window must be an object")
    _check_keys(obj, _WINDOW_KEYS, where)
    kind = _get(obj, "kind", where, str)
    if kind not in WINDOW_KINDS:
        raise ConfigError(f"{where}.kind", f"unknown kind {kind!r}")
    cadence = _duration(_get(obj, "cadence", where, str, "1d"), f"{where}.cadence")
    if kind == CUMULATIVE:
        if "size" in obj:
            raise ConfigError(f"{where}.size", "cumulative windows take no size")
        return WindowSpec.cumulative(cadence)
    if kind == SLIDING_DURATION:
        size = _duration(_get(obj, "size", where, str), f"{where}.size")
        return WindowSpec.sliding_duration(size, cadence)
    assert kind == SLIDING_COUNT
    count = _get(obj, "size", where, int)
    if count < 1:
        raise ConfigError(f"{where}.size", "count must be >= 1")
    return WindowSpec.sliding_count(count, cadence)


def delay_config_from_dict(obj: Any, where: str = "delay") -> DelayConfig:
    if not isinstance(obj, dict):
        raise ConfigError(where, "must be an object")
    _check_keys(obj, _DELAY_KEYS, where)
    mean = _get(obj, "mean_days", where, (int, float), 7.0)
    fraction = _get(obj, "labeled_fraction", where, (int, float), 0.1)
    seed = _get(obj, "seed", where, int, 0)
    family = _get(obj, "family", where, str, "exponential")
    if mean <= 0:
        raise ConfigError(f"{where}.mean_days", "must be > 0")
    if not 0 < fraction <= 1:
        raise ConfigError(f"{where}.labeled_fraction", "must be in (0, 1]")
    if family not in DELAY_FAMILIES:
        raise ConfigError(f"{where}.family", f"unknown delay family {family!r}")
    return DelayConfig(float(mean), float(fraction), seed, family)


def _iw_from_dict(obj: Any) -> IwConfig:
    where = "iw"
    if not isinstance(obj, dict):
        raise ConfigError(where, "must be an object")
    _check_keys(obj, _IW_KEYS, where)
    profile = _get(obj, "profile", where, str, None)
    reference = _get(obj, "reference", where, dict, None)
    if (profile is None) == (reference is None):
        raise ConfigError(where, "exactly one of 'profile' or 'reference' is required")
    ref_pred: str | None = None
    ref_lab: str | None = None
    if reference is not None:
        _check_keys(reference, ("predictions", "labels"), "iw.reference")
        ref_pred = _get(reference, "predictions", "iw.reference", str)
        ref_lab = _get(reference, "labels", "iw.reference", str)
    min_count = _get(obj, "min_count", where, int, DEFAULT_MIN_COUNT)
    min_support = _get(obj, "min_support", where, int, DEFAULT_MIN_SUPPORT)
    threshold = _get(obj, "alert_threshold", where, (int, float), DEFAULT_ALERT_THRESHOLD)
    if min_count < 1:
        raise ConfigError("iw.min_count", "must be >= 1")
    if min_support < 1:
        raise ConfigError("iw.min_support", "must be >= 1")
    if threshold < 0:
        raise ConfigError("iw.alert_threshold", "must be >= 0")
    return IwConfig(profile, ref_pred, ref_lab, min_count, min_support, float(threshold))


def _metrics_from(value: Any) -> tuple[str, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError("metrics", "must be a non-empty list")
    names: list[str] = []
    for i, name in enumerate(value):
        if name not in METRIC_NAMES:
            raise ConfigError(f"metrics[{i}]", f"unknown metric {name!r}")
        if name not in names:
            names.append(name)
    return tuple(names)


def _levels_from(value: Any) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError("percentile_levels", "must be a non-empty list")
    for i, p in enumerate(value):
        if isinstance(p, bool) or not isinstance(p, int) or not 0 <= p <= 100:
            raise ConfigError(f"percentile_levels[{i}]", "must be an integer in [0, 100]")
    return tuple(sorted(set(value)))


def config_hash(data: dict[str, Any]) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_config_from_dict(data: Any) -> RunConfig:
    """Validate a parsed run config document."""

    data = _check_version(data)
    _check_keys(data, _RUN_KEYS, "")
    windows_raw = _get(data, "windows", "", list)
    if not windows_raw:
        raise ConfigError("windows", "at least one window is required")
    windows = tuple(window_spec_from_dict(w, f"windows[{i}]") for i, w in enumerate(windows_raw))
    metrics = _metrics_from(data.get("metrics", list(DEFAULT_METRICS)))
    levels = _levels_from(data.get("percentile_levels", list(DEFAULT_PERCENTILE_LEVELS)))
    delay = delay_config_from_dict(data["delay"]) if data.get("delay") is not None else None
    iw = _iw_from_dict(data["iw"]) if data.get("iw") is not None else None
    if "reorder_tolerance" in data:
        tolerance = _duration(_get(data, "reorder_tolerance", "", str), "reorder_tolerance")
    else:
        tolerance = default_reorder_tolerance_ms()
    seed = _get(data, "seed", "", int, 0)
    settings = EvalSettings(
        windows=windows,
        metrics=metrics,
        percentile_levels=levels,
        min_support=iw.min_support if iw else DEFAULT_MIN_SUPPORT,
        alert_threshold=iw.alert_threshold if iw else DEFAULT_ALERT_THRESHOLD,
        seed=seed,
        config_hash=config_hash(data),
    )
    return RunConfig(
        predictions=_get(data, "predictions", "", str),
        labels=_get(data, "labels", "", str),
        output=_get(data, "output", "", str),
        settings=settings,
        delay=delay,
        iw=iw,
        reorder_tolerance_ms=tolerance,
        raw=data,
    )


def load_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def load_run_config(path: str | Path) -> RunConfig:
    return run_config_from_dict(load_json(path))


def _timestamp(value: Any, path: str) -> int:
    if not isinstance(value, str):
        raise ConfigError(path, "expected an RFC-3339 timestamp string")
    try:
        return parse_timestamp(value)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _probability(obj: dict[str, Any], key: str, where: str) -> float:
    value = float(_get(obj, key, where, (int, float)))
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{where}.{key}", "must be in [0, 1]")
    return value


def scenario_from_dict(data: Any) -> ScenarioConfig:
    """Validate a parsed scenario document."""

    data = _check_version(data)
    _check_keys(data, _SCENARIO_KEYS, "")
    start = _timestamp(_get(data, "start", "", str), "start")
    end = _timestamp(_get(data, "end", "", str), "end")
    per_day = _get(data, "events_per_day", "", int)
    seed = _get(data, "seed", "", int, 0)
    groups_raw = _get(data, "subgroups", "", list)
    groups = []
    for i, g in enumerate(groups_raw):
        where = f"subgroups[{i}]"
        if not isinstance(g, dict):
            raise ConfigError(where, "must be an object")
        _check_keys(g, _SUBGROUP_KEYS, where)
        groups.append(
            SubgroupSpec(
                key=_get(g, "key", where, str),
                mix_weight=_probability(g, "mix_weight", where),
                p_positive=_probability(g, "p_positive", where),
                p_correct=_probability(g, "p_correct", where),
            )
        )
    shifts = []
    for i, s in enumerate(_get(data, "shifts", "", list, [])):
        where = f"shifts[{i}]"
        if not isinstance(s, dict):
            raise ConfigError(where, "must be an object")
        _check_keys(s, ("at", "mix", "groups"), where)
        mix_raw = _get(s, "mix", where, dict, {})
        mix = {key: _probability(mix_raw, key, f"{where}.mix") for key in mix_raw}
        overrides: dict[str, dict[str, float]] = {}
        for key, value in _get(s, "groups", where, dict, {}).items():
            path = f"{where}.groups.{key}"
            if not isinstance(value, dict):
                raise ConfigError(path, "must be an object")
            overrides[key] = {name: _probability(value, name, path) for name in value}
        shifts.append(
            Shift(
                at=_timestamp(_get(s, "at", where, str), f"{where}.at"),
                mix=mix,
                groups=overrides,
            )
        )
    try:
        return ScenarioConfig(
            start=start,
            end=end,
            events_per_day=per_day,
            subgroups=tuple(groups),
            shifts=tuple(shifts),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("scenario", str(exc)) from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    return scenario_from_dict(load_json(path))


__all__ = [
    "SCHEMA_VERSION",
    "LOSS_PERCENTILES",
    "METRIC_NAMES",
    "DEFAULT_METRICS",
    "DEFAULT_MIN_SUPPORT",
    "DEFAULT_ALERT_THRESHOLD",
    "ConfigError",
    "log_level",
    "default_reorder_tolerance_ms",
    "IwConfig",
    "EvalSettings",
    "RunConfig",
    "window_spec_from_dict",
    "delay_config_from_dict",
    "run_config_from_dict",
    "config_hash",
    "load_json",
    "load_run_config",
    "scenario_from_dict",
    "load_scenario",
]
