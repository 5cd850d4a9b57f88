"""Tests for :mod:`streameval.config`."""

from pathlib import Path
import json
import sys

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from streameval.config import (
    DEFAULT_METRICS,
    ConfigError,
    default_reorder_tolerance_ms,
    load_run_config,
    load_scenario,
    log_level,
    run_config_from_dict,
    scenario_from_dict,
)
from streameval.events import MS_PER_DAY, MS_PER_HOUR, MS_PER_MINUTE
from streameval.windowing import WindowSpec


def _run_doc(**overrides) -> dict:
    doc = {
        "version": 1,
        "predictions": "p.jsonl",
        "labels": "l.jsonl",
        "output": "out/report.csv",
        "windows": [
            {"kind": "cumulative", "cadence": "1d"},
            {"kind": "sliding_duration", "size": "7d"},
            {"kind": "sliding_count", "size": 500, "cadence": "12h"},
        ],
    }
    doc.update(overrides)
    return doc


def test_minimal_run_config_defaults(monkeypatch) -> None:
    monkeypatch.delenv("STREAMEVAL_REORDER_TOLERANCE", raising=False)
    config = run_config_from_dict(_run_doc())
    assert config.settings.windows == (
        WindowSpec.cumulative(MS_PER_DAY),
        WindowSpec.sliding_duration(7 * MS_PER_DAY, MS_PER_DAY),
        WindowSpec.sliding_count(500, 12 * MS_PER_HOUR),
    )
    assert config.settings.metrics == DEFAULT_METRICS
    assert config.settings.percentile_levels == (10, 30, 50, 70, 90)
    assert config.delay is None and config.iw is None
    assert config.reorder_tolerance_ms == MS_PER_HOUR
    assert len(config.settings.config_hash) == 64


def test_config_hash_ignores_key_order() -> None:
    a = run_config_from_dict(_run_doc(seed=3))
    b = run_config_from_dict(dict(reversed(list(_run_doc(seed=3).items()))))
    c = run_config_from_dict(_run_doc(seed=4))
    assert a.settings.config_hash == b.settings.config_hash
    assert a.settings.config_hash != c.settings.config_hash


def test_delay_and_iw_blocks() -> None:
    config = run_config_from_dict(
        _run_doc(
            delay={"mean_days": 7, "labeled_fraction": 0.1, "seed": 4},
            iw={"reference": {"predictions": "rp.jsonl", "labels": "rl.jsonl"}, "min_support": 50},
            metrics=["accuracy", "f1", "accuracy"],
            percentile_levels=[90, 10],
        )
    )
    assert config.delay is not None
    assert (config.delay.mean_delay_days, config.delay.labeled_fraction, config.delay.seed) == (7.0, 0.1, 4)
    assert config.iw is not None
    assert config.iw.reference_predictions == "rp.jsonl"
    assert config.settings.min_support == 50
    assert config.settings.metrics == ("accuracy", "f1")
    assert config.settings.percentile_levels == (10, 90)


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"version": 2}, "version"),
        ({"windows": []}, "windows"),
        ({"windows": [{"kind": "sliding_duration", "size": "7x"}]}, "windows[0].size"),
        ({"windows": [{"kind": "sliding_count", "size": "7d"}]}, "windows[0].size"),
        ({"windows": [{"kind": "cumulative", "size": "7d"}]}, "windows[0].size"),
        ({"windows": [{"kind": "tumbling"}]}, "windows[0].kind"),
        ({"metrics": ["accuracy", "auc"]}, "metrics[1]"),
        ({"metrics": []}, "metrics"),
        ({"percentile_levels": [50, 101]}, "percentile_levels[1]"),
        ({"delay": {"labeled_fraction": 0}}, "delay.labeled_fraction"),
        ({"delay": {"family": "weibull"}}, "delay.family"),
        ({"iw": {}}, "iw"),
        ({"iw": {"profile": "x.json", "min_count": 0}}, "iw.min_count"),
        ({"seed": True}, "seed"),
        ({"predictions": 3}, "predictions"),
        ({"metric": ["accuracy"]}, "metric"),
        ({"windows": [{"kind": "cumulative", "cadance": "1d"}]}, "windows[0].cadance"),
        ({"delay": {"mean": 3}}, "delay.mean"),
        ({"iw": {"profile": "x.json", "threshold": 0.1}}, "iw.threshold"),
    ],
)
def test_invalid_run_configs_name_the_key(overrides, key) -> None:
    with pytest.raises(ConfigError) as info:
        run_config_from_dict(_run_doc(**overrides))
    assert info.value.key == key
    assert str(info.value).startswith(key)


def test_missing_version() -> None:
    doc = _run_doc()
    del doc["version"]
    with pytest.raises(ConfigError, match="version"):
        run_config_from_dict(doc)


def test_env_defaults(monkeypatch) -> None:
    monkeypatch.delenv("STREAMEVAL_LOG_LEVEL", raising=False)
    assert log_level() == "WARNING"
    monkeypatch.setenv("STREAMEVAL_LOG_LEVEL", "debug")
    assert log_level() == "DEBUG"
    monkeypatch.setenv("STREAMEVAL_LOG_LEVEL", "loud")
    with pytest.raises(ConfigError) as info:
        log_level()
    assert info.value.key == "STREAMEVAL_LOG_LEVEL"

    monkeypatch.setenv("STREAMEVAL_REORDER_TOLERANCE", "15m")
    assert default_reorder_tolerance_ms() == 15 * MS_PER_MINUTE
    assert run_config_from_dict(_run_doc()).reorder_tolerance_ms == 15 * MS_PER_MINUTE
    assert run_config_from_dict(_run_doc(reorder_tolerance="2h")).reorder_tolerance_ms == 2 * MS_PER_HOUR
    monkeypatch.setenv("STREAMEVAL_REORDER_TOLERANCE", "soon")
    with pytest.raises(ConfigError):
        default_reorder_tolerance_ms()


def test_load_run_config_file(tmp_path) -> None:
    path = tmp_path / "run.json"
    path.write_text(json.dumps(_run_doc()), encoding="utf-8")
    assert load_run_config(path).predictions == "p.jsonl"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_run_config(path)


def _scenario_doc(**overrides) -> dict:
    doc = {
        "version": 1,
        "start": "2020-02-01T00:00:00Z",
        "end": "2020-02-11T00:00:00Z",
        "events_per_day": 100,
        "seed": 3,
        "subgroups": [
            {"key": "a", "mix_weight": 0.6, "p_positive": 0.5, "p_correct": 0.8},
            {"key": "b", "mix_weight": 0.4, "p_positive": 0.3, "p_correct": 0.7},
        ],
        "shifts": [
            {"at": "2020-02-06T00:00:00Z", "groups": {"a": {"p_correct": 0.4}}},
        ],
    }
    doc.update(overrides)
    return doc


def test_scenario_document(tmp_path) -> None:
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(_scenario_doc()), encoding="utf-8")
    config = load_scenario(path)
    assert config.days == 10
    assert config.seed == 3
    assert [g.key for g in config.subgroups] == ["a", "b"]
    assert config.shifts[0].groups == {"a": {"p_correct": 0.4}}


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"start": "2020-02-01"}, "start"),
        ({"subgroups": [{"key": "a", "mix_weight": 1.2, "p_positive": 0.5, "p_correct": 0.5}]}, "subgroups[0].mix_weight"),
        ({"shifts": [{"at": "2020-02-06T00:00:00Z", "groups": {"a": 1}}]}, "shifts[0].groups.a"),
        (
            {"shifts": [{"at": "2020-02-06T00:00:00Z", "groups": {"a": {"p_positive": None}}}]},
            "shifts[0].groups.a.p_positive",
        ),
        (
            {"shifts": [{"at": "2020-02-06T00:00:00Z", "groups": {"a": {"p_correct": {"x": 1}}}}]},
            "shifts[0].groups.a.p_correct",
        ),
        (
            {"shifts": [{"at": "2020-02-06T00:00:00Z", "groups": {"b": {"p_correct": 1.5}}}]},
            "shifts[0].groups.b.p_correct",
        ),
        ({"shifts": [{"at": "2020-02-06T00:00:00Z", "mix": {"a": None, "b": 0.5}}]}, "shifts[0].mix.a"),
        ({"shifts": [{"at": "2020-02-06T00:00:00Z", "mix": {"zz": 1.0}}]}, "scenario"),
        ({"shifts": [{"at": "2020-02-06T00:00:00Z", "when": "later"}]}, "shifts[0].when"),
        ({"events": 10}, "events"),
        (
            {
                "shifts": [
                    {"at": "2020-02-06T00:00:00Z"},
                    {"at": "2020-02-06T00:00:00Z"},
                ]
            },
            "scenario",
        ),
    ],
)
def test_invalid_scenarios(overrides, key) -> None:
    with pytest.raises(ConfigError) as info:
        scenario_from_dict(_scenario_doc(**overrides))
    assert info.value.key == key
