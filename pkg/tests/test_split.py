"""Seeded dataset splitting and the manifest file."""

from collections import Counter

import pytest

from pelvimark.core.records import Split
from pelvimark.errors import ConfigurationError
from pelvimark.labelgen.split import load_split_manifest, save_split_manifest, split_dataset

IDS = [f"img-{i:03d}" for i in range(100)]


def test_split_is_exhaustive_with_exact_counts():
    assignment = split_dataset(IDS, (80, 5, 15), seed=42)
    assert sorted(assignment) == sorted(IDS)
    tally = Counter(assignment.values())
    assert tally[Split.TRAIN] == 80
    assert tally[Split.VAL] == 5
    assert tally[Split.TEST] == 15


def test_split_is_deterministic_per_seed():
    a = split_dataset(IDS, (80, 5, 15), seed=42)
    b = split_dataset(IDS, (80, 5, 15), seed=42)
    assert a == b
    c = split_dataset(IDS, (80, 5, 15), seed=43)
    assert c != a


def test_split_actually_shuffles():
    # with seed-driven shuffling the first 80 ids in document order
    # should not all land in train
    assignment = split_dataset(IDS, (80, 5, 15), seed=42)
    assert any(assignment[i] is not Split.TRAIN for i in IDS[:80])


def test_all_ids_may_go_to_one_bucket():
    assignment = split_dataset(IDS, (0, 0, 100), seed=7)
    assert set(assignment.values()) == {Split.TEST}


def test_count_sum_mismatch_rejected():
    with pytest.raises(ConfigurationError, match="sum"):
        split_dataset(IDS, (80, 5, 14), seed=42)


def test_negative_count_rejected():
    with pytest.raises(ConfigurationError, match="non-negative"):
        split_dataset(IDS, (101, 0, -1), seed=42)


def test_duplicate_ids_rejected():
    with pytest.raises(ConfigurationError, match="duplicate"):
        split_dataset(["a", "b", "a"], (2, 0, 1), seed=42)


def test_manifest_round_trip(tmp_path):
    assignment = split_dataset(IDS, (80, 5, 15), seed=42)
    path = tmp_path / "split.txt"
    save_split_manifest(assignment, path, seed=42, counts=(80, 5, 15))
    loaded, seed, counts = load_split_manifest(path)
    assert loaded == assignment
    assert seed == 42
    assert counts == (80, 5, 15)


def test_manifest_is_sorted_and_headed(tmp_path):
    path = tmp_path / "split.txt"
    save_split_manifest(
        {"b": Split.TEST, "a": Split.TRAIN}, path, seed=9, counts=(1, 0, 1)
    )
    lines = path.read_text("utf-8").splitlines()
    assert lines[0] == "# seed: 9"
    assert lines[1] == "# counts: train=1 val=0 test=1"
    assert lines[2:] == ["a\ttrain", "b\ttest"]


def test_manifest_rejects_malformed_lines(tmp_path):
    path = tmp_path / "split.txt"
    path.write_text("img-1 train\n", "utf-8")
    with pytest.raises(ConfigurationError, match="malformed"):
        load_split_manifest(path)
    path.write_text("img-1\tholdout\n", "utf-8")
    with pytest.raises(ConfigurationError, match="unknown split"):
        load_split_manifest(path)
