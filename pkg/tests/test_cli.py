"""Tests for :mod:`streameval.cli`."""

from pathlib import Path
import json
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from streameval.cli import main
from streameval.events import (
    LabelEvent,
    PredictionEvent,
    ReadStats,
    parse_timestamp,
    read_label_stream,
    read_prediction_stream,
    write_label_stream,
    write_prediction_stream,
)

T0 = parse_timestamp("2020-02-01T00:00:00Z")


def _write(directory: Path, preds, labels) -> tuple[Path, Path]:
    pred_path = directory / "p.jsonl"
    label_path = directory / "l.jsonl"
    with open(pred_path, "w", encoding="utf-8") as fh:
        write_prediction_stream(preds, fh)
    with open(label_path, "w", encoding="utf-8") as fh:
        write_label_stream(labels, fh)
    return pred_path, label_path


def _two_group_reference() -> tuple[list[PredictionEvent], list[LabelEvent]]:
    preds, labels = [], []
    for key, correct in (("A", 90), ("B", 50)):
        for i in range(100):
            event_id = f"{key}{i}"
            preds.append(PredictionEvent(event_id, T0 + len(preds), 0.9 if i < correct else 0.1, key))
            labels.append(LabelEvent(event_id, T0 + len(labels), 1))
    return preds, labels


def test_generate_builtin_is_deterministic(tmp_path, capsys) -> None:
    args = ["generate", "--builtin", "taxi-like", "--events-per-day", "20", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "one")]) == 0
    assert main(args + ["--out", str(tmp_path / "two")]) == 0
    assert "wrote 3000 events" in capsys.readouterr().out
    for name in ("predictions.jsonl", "labels.jsonl"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    stats = ReadStats()
    with open(tmp_path / "one" / "predictions.jsonl", "rb") as fh:
        assert len(list(read_prediction_stream(fh, stats=stats))) == 3000
    assert stats.duplicates == 0


def test_generate_from_scenario_file(tmp_path) -> None:
    scenario = {
        "version": 1,
        "start": "2020-02-01T00:00:00Z",
        "end": "2020-02-03T00:00:00Z",
        "events_per_day": 10,
        "subgroups": [{"key": "a", "mix_weight": 1.0, "p_positive": 0.5, "p_correct": 0.5}],
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario), encoding="utf-8")
    assert main(["generate", "--scenario", str(path), "--out", str(tmp_path / "out")]) == 0
    lines = (tmp_path / "out" / "labels.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 20


def test_missing_out_is_a_usage_error() -> None:
    assert main(["generate", "--builtin", "taxi-like"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["evaluate", "--config", "x.json", "--unknown"]) == 2


def test_unwritable_output_is_an_io_error(tmp_path) -> None:
    blocker = tmp_path / "file"
    blocker.write_text("", encoding="utf-8")
    code = main(["generate", "--builtin", "taxi-like", "--events-per-day", "1", "--out", str(blocker / "sub")])
    assert code == 2


def test_profile_command(tmp_path, capsys) -> None:
    pred_path, label_path = _write(tmp_path, *_two_group_reference())
    out = tmp_path / "profile.json"
    assert main(["profile", "--reference", str(pred_path), str(label_path), "--out", str(out)]) == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert doc["groups"]["A"]["accuracy"] == 0.9
    assert doc["groups"]["B"]["accuracy"] == 0.5
    assert "2 group(s)" in capsys.readouterr().out

    assert main(["profile", "--reference", str(pred_path), str(label_path), "--min-count", "150", "--out", str(out)]) == 0
    doc = json.loads(out.read_text(encoding="utf-8"))
    assert set(doc["groups"]) == {"__other__"}
    assert doc["folded"] == ["A", "B"]


def test_profile_of_empty_reference(tmp_path, capsys) -> None:
    pred_path, label_path = _write(tmp_path, [], [])
    code = main(["profile", "--reference", str(pred_path), str(label_path), "--out", str(tmp_path / "p.json")])
    assert code == 1
    assert "empty reference" in capsys.readouterr().out


def test_delay_command(tmp_path) -> None:
    _, label_path = _write(tmp_path, [], [LabelEvent(f"e{i}", T0 + i, 1) for i in range(1000)])
    out = tmp_path / "delayed.jsonl"
    args = ["delay", "--labels", str(label_path), "--fraction", "0.2", "--seed", "1", "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    with open(out, "rb") as fh:
        delayed = list(read_label_stream(fh))
    assert 100 < len(delayed) < 300
    assert main(args) == 0
    assert out.read_bytes() == first
    assert main(["delay", "--labels", str(label_path), "--fraction", "0", "--out", str(out)]) == 1


def _config(tmp_path: Path, **extra) -> Path:
    preds = [
        PredictionEvent("a", T0 + 3_600_000, 0.9),
        PredictionEvent("b", T0 + 7_200_000, 0.2),
        PredictionEvent("c", T0 + 10_800_000, 0.7),
    ]
    labels = [LabelEvent(p.id, p.event_time, y) for p, y in zip(preds, (1, 0, 0))]
    pred_path, label_path = _write(tmp_path, preds, labels)
    doc = {
        "version": 1,
        "predictions": str(pred_path),
        "labels": str(label_path),
        "output": str(tmp_path / "report.csv"),
        "windows": [{"kind": "cumulative", "cadence": "1d"}],
        "metrics": ["accuracy"],
    }
    doc.update(extra)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_evaluate_three_events(tmp_path, capsys) -> None:
    assert main(["evaluate", "--config", str(_config(tmp_path))]) == 0
    rows = (tmp_path / "report.csv").read_text(encoding="utf-8").splitlines()
    assert rows == [
        "window_kind,window_size,cadence,window_end,metric,value,support",
        "cumulative,,1d,2020-02-02T00:00:00.000Z,accuracy,0.6666666666666666,3",
    ]
    assert (tmp_path / "report.meta.json").exists()
    assert "wrote 1 row(s)" in capsys.readouterr().out


def test_evaluate_invalid_config_names_the_key(tmp_path, capsys) -> None:
    path = _config(tmp_path, windows=[{"kind": "sliding_duration", "size": "soon"}])
    assert main(["evaluate", "--config", str(path)]) == 1
    assert "windows[0].size" in capsys.readouterr().out


def test_evaluate_missing_config_file(tmp_path) -> None:
    assert main(["evaluate", "--config", str(tmp_path / "absent.json")]) == 2


def test_compare_command(tmp_path) -> None:
    path = _config(tmp_path, delay={"mean_days": 1e-12, "labeled_fraction": 1.0, "seed": 0})
    assert main(["compare", "--config", str(path)]) == 0
    rows = (tmp_path / "report.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0].endswith(",true,observed,difference,true_support,observed_support")
    assert rows[1].endswith(",accuracy,0.6666666666666666,0.6666666666666666,0.0,3,3")


def test_compare_without_delay_is_a_config_error(tmp_path) -> None:
    assert main(["compare", "--config", str(_config(tmp_path))]) == 1


def test_verbose_flag(tmp_path, monkeypatch) -> None:
    monkeypatch.setenv("STREAMEVAL_LOG_LEVEL", "ERROR")
    assert main(["-v", "evaluate", "--config", str(_config(tmp_path))]) == 0


def test_invalid_log_level_is_a_config_error(tmp_path, monkeypatch, capsys) -> None:
    monkeypatch.setenv("STREAMEVAL_LOG_LEVEL", "loud")
    assert main(["evaluate", "--config", str(_config(tmp_path))]) == 1
    assert "STREAMEVAL_LOG_LEVEL" in capsys.readouterr().out


def test_generate_rejects_null_shift_override(tmp_path, capsys) -> None:
    scenario = {
        "version": 1,
        "start": "2020-02-01T00:00:00Z",
        "end": "2020-02-03T00:00:00Z",
        "events_per_day": 10,
        "subgroups": [{"key": "a", "mix_weight": 1.0, "p_positive": 0.5, "p_correct": 0.5}],
        "shifts": [{"at": "2020-02-02T00:00:00Z", "groups": {"a": {"p_positive": None}}}],
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario), encoding="utf-8")
    assert main(["generate", "--scenario", str(path), "--out", str(tmp_path / "out")]) == 1
    assert "shifts[0].groups.a.p_positive" in capsys.readouterr().out


def test_profile_and_delay_use_the_environment_tolerance(tmp_path, monkeypatch) -> None:
    preds, _ = _two_group_reference()
    pred_path, _ = _write(tmp_path, preds, [])
    # second label is ten minutes older than the first
    label_path = tmp_path / "shuffled.jsonl"
    label_path.write_text(
        '{"id":"A0","ts":"2020-02-01T00:10:00.000Z","label":1}\n'
        '{"id":"A1","ts":"2020-02-01T00:00:00.000Z","label":1}\n',
        encoding="utf-8",
    )
    profile = ["profile", "--reference", str(pred_path), str(label_path), "--min-count", "1", "--out", str(tmp_path / "p.json")]
    delay = ["delay", "--labels", str(label_path), "--fraction", "1", "--out", str(tmp_path / "d.jsonl")]

    monkeypatch.delenv("STREAMEVAL_REORDER_TOLERANCE", raising=False)
    assert main(profile) == 0
    assert main(delay) == 0

    monkeypatch.setenv("STREAMEVAL_REORDER_TOLERANCE", "1m")
    assert main(profile) == 1
    assert main(delay) == 1
