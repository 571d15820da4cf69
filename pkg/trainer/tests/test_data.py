from __future__ import annotations

import json

import pytest

from gatetrainer.data import (
    DatasetError,
    SingleClassDatasetError,
    load_dataset,
    split_dataset,
    synthetic_dataset,
    write_dataset,
)


def test_synthetic_dataset_is_balanced_and_sized():
    rows = synthetic_dataset(rows=200, seed=7)
    assert len(rows) == 200
    assert sum(r["label"] for r in rows) == 100
    assert all(set(r) == {"text", "label"} for r in rows)


def test_synthetic_dataset_deterministic():
    assert synthetic_dataset(rows=50, seed=3) == synthetic_dataset(rows=50, seed=3)


def test_dataset_round_trip(tmp_path):
    rows = synthetic_dataset(rows=20, seed=1)
    path = tmp_path / "train.jsonl"
    write_dataset(rows, path)
    assert load_dataset(path) == rows


def test_empty_dataset_is_single_class(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(SingleClassDatasetError):
        load_dataset(path)


def test_single_class_dataset_rejected(tmp_path):
    path = tmp_path / "one.jsonl"
    path.write_text(json.dumps({"text": "a", "label": 1}) + "\n")
    with pytest.raises(SingleClassDatasetError):
        load_dataset(path)


def test_malformed_rows_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"text": "a", "label": 2}\n')
    with pytest.raises(DatasetError):
        load_dataset(path)


def test_split_reproducible_membership():
    rows = synthetic_dataset(rows=60, seed=2)
    train_a, eval_a = split_dataset(rows, 0.25, seed=11)
    train_b, eval_b = split_dataset(rows, 0.25, seed=11)
    assert eval_a == eval_b and train_a == train_b
    assert len(eval_a) == 15
    # different seed, different membership
    _, eval_c = split_dataset(rows, 0.25, seed=12)
    assert eval_c != eval_a


def test_split_fraction_validated():
    rows = synthetic_dataset(rows=10, seed=2)
    with pytest.raises(DatasetError):
        split_dataset(rows, 1.0, seed=1)
    with pytest.raises(DatasetError):
        split_dataset(rows, 0.0, seed=1)
