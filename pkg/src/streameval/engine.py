"""Run orchestration: replay streams, drive windows, emit metric series.

:func:`evaluate` is the in-memory core.  :func:`run` and
:func:`true_vs_observed` read the files named by a :class:`RunConfig` and
call it.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import pandas as pd

from . import __version__
from .config import LOSS_PERCENTILES, ConfigError, EvalSettings, RunConfig
from .events import (
    JoinedExample,
    LabelEvent,
    PredictionEvent,
    ReadStats,
    format_timestamp,
    read_label_stream,
    read_prediction_stream,
)
from .label_delay import JoinState, join_by_id, simulate
from .metrics import (
    ACCURACY,
    F1,
    LABELED_FRACTION,
    POSITIVE_FRACTION,
    PRECISION,
    RECALL,
    ConfusionCounts,
    MetricPoint,
    accuracy_from_counts,
    labeled_fraction,
    loss_metric_name,
    loss_percentiles,
    positive_fraction_from_counts,
    precision_recall_f1_from_counts,
)
from .stratified_iw import (
    SubgroupCounts,
    SubgroupProfile,
    build_profile,
    iw_difference,
    iw_estimate_from_counts,
    load_profile,
)
from .windowing import SLIDING_COUNT, WindowAccumulator, WindowSpec, evaluation_times

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["window_kind", "window_size", "cadence", "window_end", "metric"]
REPORT_COLUMNS = KEY_COLUMNS + ["value", "support"]
PAIRED_COLUMNS = KEY_COLUMNS + [
    "true",
    "observed",
    "difference",
    "true_support",
    "observed_support",
]
IW_METRICS = ("iw_estimate", "iw_coverage", "iw_difference")


@dataclass(frozen=True)
class ReportRow:
    spec: WindowSpec
    point: MetricPoint


def _key_fields(spec: WindowSpec, point: MetricPoint) -> dict[str, Any]:
    return {
        "window_kind": spec.kind,
        "window_size": spec.size_label,
        "cadence": spec.cadence_label,
        "window_end": format_timestamp(point.window_end) if point.window_end is not None else "",
        "metric": point.metric,
    }


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep="", lineterminator="\n")


def _write_meta(metadata: dict[str, Any], csv_path: Path) -> Path:
    meta_path = csv_path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return meta_path


@dataclass
class Report:
    """Metric rows sorted by (window spec, metric, window end) plus metadata."""

    rows: list[ReportRow]
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        records = [
            {**_key_fields(r.spec, r.point), "value": r.point.value, "support": r.point.support}
            for r in self.rows
        ]
        frame = pd.DataFrame.from_records(records, columns=REPORT_COLUMNS)
        frame["value"] = frame["value"].astype("float64")
        frame["support"] = frame["support"].astype("int64")
        return frame

    def series(self, spec: WindowSpec, metric: str) -> list[MetricPoint]:
        return [r.point for r in self.rows if r.spec == spec and r.point.metric == metric]

    def write(self, path: str | Path) -> tuple[Path, Path]:
        """Write the CSV to ``path`` and metadata to ``<stem>.meta.json``."""

        csv_path = Path(path)
        _write_csv(self.to_frame(), csv_path)
        return csv_path, _write_meta(self.metadata, csv_path)


@dataclass
class PairedReport:
    """True and observed series side by side."""

    frame: pd.DataFrame
    metadata: dict[str, Any] = field(default_factory=dict)

    def write(self, path: str | Path) -> tuple[Path, Path]:
        csv_path = Path(path)
        _write_csv(self.frame, csv_path)
        return csv_path, _write_meta(self.metadata, csv_path)


def metric_names(settings: EvalSettings, *, with_iw: bool = False) -> list[str]:
    """Expand configured metrics into report metric names, in report order."""

    names: list[str] = []
    for name in settings.metrics:
        if name == LOSS_PERCENTILES:
            names.extend(loss_metric_name(p) for p in settings.percentile_levels)
        else:
            names.append(name)
    if with_iw:
        names.extend(IW_METRICS)
    return names


class _SpecState:
    def __init__(self, spec: WindowSpec, grid: Iterable[int], seed: int) -> None:
        self.spec = spec
        self.grid = set(grid)
        self.confusion = ConfusionCounts()
        self.subgroups = SubgroupCounts()
        self.joined: WindowAccumulator[JoinedExample] = WindowAccumulator(
            spec, stats=self.confusion, seed=seed
        )
        self.predictions: WindowAccumulator[PredictionEvent] = WindowAccumulator(
            spec, stats=self.subgroups, reservoir_size=0
        )


class _Evaluation:
    def __init__(
        self,
        settings: EvalSettings,
        profile: SubgroupProfile | None,
    ) -> None:
        self.settings = settings
        self.profile = profile
        self.names = metric_names(settings, with_iw=profile is not None)
        self.cells: dict[tuple[int, str], list[MetricPoint]] = defaultdict(list)
        self.approximate: set[str] = set()
        self.alerts: list[dict[str, Any]] = []

    def emit(self, index: int, state: _SpecState, t: int) -> None:
        settings = self.settings
        counts = state.confusion
        points: dict[str, MetricPoint] = {}
        wanted = set(self.names)

        if ACCURACY in wanted or self.profile is not None:
            points[ACCURACY] = accuracy_from_counts(counts, t)
        if POSITIVE_FRACTION in wanted:
            points[POSITIVE_FRACTION] = positive_fraction_from_counts(counts, t)
        if wanted & {PRECISION, RECALL, F1}:
            p, r, f = precision_recall_f1_from_counts(counts, t)
            points.update({PRECISION: p, RECALL: r, F1: f})
        if LABELED_FRACTION in wanted:
            if state.spec.kind == SLIDING_COUNT:
                points[LABELED_FRACTION] = MetricPoint(t, LABELED_FRACTION, None, 0)
            else:
                points[LABELED_FRACTION] = labeled_fraction(
                    state.joined.count, state.predictions.count, t
                )
        if LOSS_PERCENTILES in settings.metrics:
            sample, approximate = state.joined.sample()
            found = loss_percentiles(sample, settings.percentile_levels)
            for level in settings.percentile_levels:
                name = loss_metric_name(level)
                if found is None:
                    points[name] = MetricPoint(t, name, None, 0)
                else:
                    points[name] = MetricPoint(t, name, found.values[level], state.joined.count)
                if approximate:
                    self.approximate.add(f"{state.spec.describe()}:{name}")
        if self.profile is not None:
            self._emit_iw(state, t, points)

        for name in self.names:
            self.cells[(index, name)].append(points[name])

    def _emit_iw(self, state: _SpecState, t: int, points: dict[str, MetricPoint]) -> None:
        assert self.profile is not None
        estimate = iw_estimate_from_counts(state.subgroups.counts, self.profile, t)
        for point in estimate.as_points():
            points[point.metric] = point
        realized = points[ACCURACY]
        if estimate.estimate is None or realized.support < self.settings.min_support:
            points["iw_difference"] = MetricPoint(t, "iw_difference", None, 0)
            return
        diff = iw_difference(estimate, realized)
        points["iw_difference"] = MetricPoint(t, "iw_difference", diff, realized.support)
        if abs(diff) > self.settings.alert_threshold:
            self.alerts.append(
                {
                    "window": state.spec.describe(),
                    "window_end": format_timestamp(t),
                    "iw_difference": diff,
                }
            )


def evaluate(
    predictions: Iterable[PredictionEvent],
    labels: Iterable[LabelEvent],
    settings: EvalSettings,
    profile: SubgroupProfile | None = None,
    *,
    warnings: dict[str, int] | None = None,
) -> Report:
    """Replay ``predictions`` and ``labels`` and compute every metric series.

    Labels become visible at their availability time; window membership is
    keyed by the prediction's event time.  The evaluation grid spans the
    first to the last prediction.
    """

    preds = sorted(predictions, key=lambda p: p.event_time)
    if not preds:
        raise ValueError("prediction stream is empty")
    if profile is not None and not any(p.subgroup is not None for p in preds):
        raise ConfigError("iw", "importance weighting needs subgroup keys on predictions")

    start, end = preds[0].event_time, preds[-1].event_time
    states = [
        _SpecState(spec, evaluation_times(start, end, spec), settings.seed)
        for spec in settings.windows
    ]
    ticks = sorted({t for s in states for t in s.grid})
    logger.info(
        "evaluating %d predictions over %d tick(s) and %d window(s)",
        len(preds),
        len(ticks),
        len(states),
    )

    join = JoinState(preds, sorted(labels, key=lambda label: label.available_time))
    run = _Evaluation(settings, profile)
    for t in ticks:
        step = join.advance(t)
        for index, state in enumerate(states):
            state.joined.advance(step.new_joined, t)
            state.predictions.advance(step.new_predictions, t)
            if t in state.grid:
                run.emit(index, state, t)

    rows = [
        ReportRow(state.spec, point)
        for index, state in enumerate(states)
        for name in run.names
        for point in run.cells[(index, name)]
    ]

    counters = dict(warnings or {})
    counters["orphan_labels"] = counters.get("orphan_labels", 0) + join.orphans
    counters["duplicate_labels"] = counters.get("duplicate_labels", 0) + join.duplicates
    counters["early_labels"] = join.early_labels
    if join.orphans:
        logger.warning("%d orphan label(s) with no matching prediction", join.orphans)
    if join.early_labels:
        logger.warning(
            "%d label(s) available before their prediction were rejected", join.early_labels
        )
    if run.alerts:
        first = run.alerts[0]
        logger.warning(
            "IW difference above %.3f in %d window(s); first %s at %s (%+.4f)",
            settings.alert_threshold,
            len(run.alerts),
            first["window"],
            first["window_end"],
            first["iw_difference"],
        )

    metadata = {
        "version": __version__,
        "config_hash": settings.config_hash,
        "seed": settings.seed,
        "windows": [s.describe() for s in settings.windows],
        "metrics": run.names,
        "approximate": sorted(run.approximate),
        "warnings": counters,
        "alerts": run.alerts,
        "unlabeled_at_end": join.unlabeled_count,
    }
    return Report(rows, metadata)


def read_predictions(
    path: str | Path, reorder_tolerance_ms: int, stats: ReadStats | None = None
) -> list[PredictionEvent]:
    with open(path, "rb") as fh:
        return list(
            read_prediction_stream(
                fh, reorder_tolerance_ms=reorder_tolerance_ms, stats=stats, name=str(path)
            )
        )


def read_labels(
    path: str | Path, reorder_tolerance_ms: int, stats: ReadStats | None = None
) -> list[LabelEvent]:
    with open(path, "rb") as fh:
        return list(
            read_label_stream(
                fh, reorder_tolerance_ms=reorder_tolerance_ms, stats=stats, name=str(path)
            )
        )


def _resolve_profile(config: RunConfig) -> SubgroupProfile | None:
    iw = config.iw
    if iw is None:
        return None
    if iw.profile is not None:
        return load_profile(iw.profile)
    assert iw.reference_predictions is not None and iw.reference_labels is not None
    reference = join_by_id(
        read_predictions(iw.reference_predictions, config.reorder_tolerance_ms),
        read_labels(iw.reference_labels, config.reorder_tolerance_ms),
    )
    return build_profile(reference, iw.min_count)


def _load_inputs(
    config: RunConfig,
) -> tuple[list[PredictionEvent], list[LabelEvent], dict[str, int]]:
    pred_stats, label_stats = ReadStats(), ReadStats()
    preds = read_predictions(config.predictions, config.reorder_tolerance_ms, pred_stats)
    labels = read_labels(config.labels, config.reorder_tolerance_ms, label_stats)
    warnings = {
        "duplicate_predictions": pred_stats.duplicates,
        "duplicate_labels": label_stats.duplicates,
    }
    return preds, labels, warnings


def run(config: RunConfig) -> Report:
    """Evaluate the streams named by ``config``.

    With a ``delay`` block the label stream is first passed through
    :func:`streameval.label_delay.simulate`.
    """

    preds, labels, warnings = _load_inputs(config)
    if config.delay is not None:
        labels = simulate(labels, config.delay)
    report = evaluate(preds, labels, config.settings, _resolve_profile(config), warnings=warnings)
    if config.delay is not None:
        report.metadata["delay"] = _delay_meta(config)
    return report


def _delay_meta(config: RunConfig) -> dict[str, Any]:
    assert config.delay is not None
    return {
        "mean_days": config.delay.mean_delay_days,
        "labeled_fraction": config.delay.labeled_fraction,
        "seed": config.delay.seed,
        "family": config.delay.family,
    }


def pair_reports(true: Report, observed: Report) -> pd.DataFrame:
    """Align two reports cell by cell; ``difference`` is observed minus true."""

    left = true.to_frame().rename(columns={"value": "true", "support": "true_support"})
    right = observed.to_frame().rename(
        columns={"value": "observed", "support": "observed_support"}
    )
    frame = left.merge(right, on=KEY_COLUMNS, how="left", validate="one_to_one", sort=False)
    frame["difference"] = frame["observed"] - frame["true"]
    return frame[PAIRED_COLUMNS]


def true_vs_observed(config: RunConfig) -> PairedReport:
    """Evaluate once on the true labels and once on simulated delayed labels."""

    if config.delay is None:
        raise ConfigError("delay", "compare needs a delay block")
    preds, labels, warnings = _load_inputs(config)
    return compare(preds, labels, config, warnings=warnings)


def compare(
    predictions: Sequence[PredictionEvent],
    labels: Sequence[LabelEvent],
    config: RunConfig,
    *,
    warnings: dict[str, int] | None = None,
) -> PairedReport:
    """In-memory form of :func:`true_vs_observed`."""

    if config.delay is None:
        raise ConfigError("delay", "compare needs a delay block")
    profile = _resolve_profile(config)
    true_report = evaluate(predictions, labels, config.settings, profile, warnings=warnings)
    observed_labels = simulate(labels, config.delay)
    observed_report = evaluate(
        predictions, observed_labels, config.settings, profile, warnings=warnings
    )
    metadata = {
        "version": __version__,
        "config_hash": config.settings.config_hash,
        "seed": config.settings.seed,
        "delay": _delay_meta(config),
        "true": true_report.metadata,
        "observed": observed_report.metadata,
    }
    return PairedReport(pair_reports(true_report, observed_report), metadata)


__all__ = [
    "KEY_COLUMNS",
    "REPORT_COLUMNS",
    "PAIRED_COLUMNS",
    "IW_METRICS",
    "ReportRow",
    "Report",
    "PairedReport",
    "metric_names",
    "evaluate",
    "read_predictions",
    "read_labels",
    "run",
    "pair_reports",
    "true_vs_observed",
    "compare",
]
