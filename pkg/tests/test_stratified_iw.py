"""Tests for :mod:`streameval.stratified_iw`."""

from pathlib import Path
import json
import random
import sys

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from streameval.events import JoinedExample, PredictionEvent
from streameval.metrics import MetricPoint
from streameval.stratified_iw import (
    OTHER,
    EmptyReferenceError,
    InsufficientLabelsError,
    IwEstimate,
    SubgroupCounts,
    SubgroupProfile,
    WindowMismatchError,
    build_profile,
    iw_difference,
    iw_estimate,
    iw_estimate_from_counts,
    load_profile,
    profile_from_dict,
    profile_to_dict,
    save_profile,
)


def _reference(groups: dict[str | None, tuple[int, int]]) -> list[JoinedExample]:
    """``groups`` maps a key to ``(correct, total)``."""

    out = []
    n = 0
    for key, (correct, total) in groups.items():
        for i in range(total):
            score = 0.9 if i < correct else 0.1
            out.append(JoinedExample(f"r{n}", n, score, key, 1, n))
            n += 1
    return out


def _live(groups: dict[str | None, int]) -> list[PredictionEvent]:
    out = []
    for key, count in groups.items():
        out.extend(PredictionEvent(f"{key}-{i}", i, 0.5, key) for i in range(count))
    return out


def test_two_group_profile() -> None:
    profile = build_profile(_reference({"A": (90, 100), "B": (50, 100)}))
    assert profile.groups["A"].accuracy == pytest.approx(0.9)
    assert profile.groups["B"].accuracy == pytest.approx(0.5)
    assert profile.global_accuracy == pytest.approx(0.7)
    assert profile.total_count == 200
    assert profile.folded == frozenset()


def test_small_groups_fold_into_other() -> None:
    profile = build_profile(
        _reference({"A": (90, 100), "B": (5, 10), None: (1, 2)}), min_count=30
    )
    assert set(profile.groups) == {"A", OTHER}
    assert profile.folded == {"B"}
    assert profile.groups[OTHER].count == 12
    assert profile.groups[OTHER].accuracy == pytest.approx(6 / 12)


def test_empty_reference() -> None:
    with pytest.raises(EmptyReferenceError, match="empty reference"):
        build_profile([])


def test_estimate_reweights_by_live_mix() -> None:
    profile = build_profile(_reference({"A": (90, 100), "B": (50, 100)}))
    est = iw_estimate(_live({"A": 80, "B": 20}), profile, window_end=5)
    assert est.estimate == pytest.approx(0.8 * 0.9 + 0.2 * 0.5)
    assert est.coverage == 1.0
    assert est.support == 100
    assert est.window_end == 5


def test_unseen_group_uses_global_accuracy_and_lowers_coverage() -> None:
    profile = build_profile(_reference({"A": (90, 100), "B": (50, 100)}))
    est = iw_estimate(_live({"A": 50, "C": 50}), profile)
    assert est.estimate == pytest.approx(0.5 * 0.9 + 0.5 * 0.7)
    assert est.coverage == pytest.approx(0.5)


def test_folded_live_group_uses_other_bucket() -> None:
    profile = build_profile(_reference({"A": (90, 100), "B": (3, 10), "C": (10, 40)}), min_count=30)
    est = iw_estimate(_live({"B": 10}), profile)
    assert est.estimate == pytest.approx(0.3)
    assert est.coverage == 1.0


def test_empty_live_window() -> None:
    profile = build_profile(_reference({"A": (90, 100)}))
    est = iw_estimate([], profile, window_end=3)
    assert est == IwEstimate(3, None, None, 0)
    assert [p.value for p in est.as_points()] == [None, None]


def test_subgroup_counts_track_membership() -> None:
    counts = SubgroupCounts()
    events = _live({"A": 2, None: 1})
    for e in events:
        counts.add(e)
    counts.remove(events[0])
    assert dict(counts.counts) == {"A": 1, None: 1}
    assert counts.total == 2


def test_iw_difference() -> None:
    est = IwEstimate(10, 0.8, 1.0, 100)
    assert iw_difference(est, MetricPoint(10, "accuracy", 0.7, 40)) == pytest.approx(0.1)
    with pytest.raises(WindowMismatchError):
        iw_difference(est, MetricPoint(11, "accuracy", 0.7, 40))
    with pytest.raises(InsufficientLabelsError):
        iw_difference(est, MetricPoint(10, "accuracy", None, 0))
    with pytest.raises(InsufficientLabelsError):
        iw_difference(IwEstimate(10, None, None, 0), MetricPoint(10, "accuracy", 0.7, 4))


def test_profile_persistence(tmp_path) -> None:
    profile = build_profile(_reference({"A": (90, 100), "B": (3, 10)}), min_count=30)
    path = tmp_path / "profile.json"
    save_profile(profile, path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    assert doc["folded"] == ["B"]
    assert doc["min_count"] == 30
    assert set(doc["groups"]) == {"A", OTHER}
    assert load_profile(path) == profile
    assert profile_from_dict(profile_to_dict(profile)) == profile


@pytest.mark.parametrize(
    "doc",
    [
        [],
        {"groups": {}, "global": {"accuracy": 0.5, "count": 1}},
        {"groups": {"A": {"accuracy": 1.5, "count": 3}}, "global": {"accuracy": 0.5, "count": 3}},
        {"groups": {"A": {"accuracy": 0.5, "count": 0}}, "global": {"accuracy": 0.5, "count": 3}},
        {"groups": {"A": {"accuracy": 0.5, "count": 3}}},
    ],
)
def test_invalid_profile_documents(doc) -> None:
    with pytest.raises(ValueError):
        profile_from_dict(doc)


def test_invalid_profile_json(tmp_path) -> None:
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ValueError):
        load_profile(path)


def test_two_group_profile_global_accuracy() -> None:
    profile = build_profile(_reference({"A": (9, 10), "B": (1, 2)}), min_count=1)
    assert profile.groups["A"].accuracy == 0.9
    assert profile.groups["B"].accuracy == 0.5
    assert profile.global_accuracy == pytest.approx(10 / 12)
    assert profile.total_count == 12
    assert not profile.folded


def _random_profile(
    rng: random.Random,
) -> tuple[dict[str | None, tuple[int, int]], SubgroupProfile]:
    groups: dict[str | None, tuple[int, int]] = {}
    for g in range(rng.randrange(1, 6)):
        total = rng.randrange(1, 40)
        groups[f"g{g}"] = (rng.randrange(total + 1), total)
    return groups, build_profile(_reference(groups), min_count=1)


@pytest.mark.parametrize("seed", range(20))
def test_covered_estimate_lies_between_group_accuracies(seed) -> None:
    rng = random.Random(seed)
    groups, profile = _random_profile(rng)
    counts = {key: rng.randrange(1, 500) for key in groups}
    estimate = iw_estimate_from_counts(counts, profile)
    accuracies = [g.accuracy for g in profile.groups.values()]

    assert estimate.coverage == 1.0
    assert estimate.estimate is not None
    assert min(accuracies) - 1e-12 <= estimate.estimate <= max(accuracies) + 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_reference_mix_reproduces_global_accuracy(seed) -> None:
    rng = random.Random(1000 + seed)
    groups, profile = _random_profile(rng)
    scale = rng.randrange(1, 5)
    counts = {key: total * scale for key, (_, total) in groups.items()}
    estimate = iw_estimate_from_counts(counts, profile)
    assert estimate.estimate == pytest.approx(profile.global_accuracy, abs=1e-12)
