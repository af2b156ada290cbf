from __future__ import annotations

import json
import random

import pytest

from crossling.corpus import LoadStats, SamplingConfig, load_seed, sample_passages
from crossling.errors import ConfigError


def write_lines(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def test_plain_lines_assigns_ordinal_ids(tmp_path):
    path = write_lines(tmp_path, "f", ["alpha", "beta", "gamma"])
    passages = list(load_seed(path))
    assert [p.id for p in passages] == ["f:0", "f:1", "f:2"]
    assert [p.text for p in passages] == ["alpha", "beta", "gamma"]
    assert all(p.source == "f" and p.lang == "eng" for p in passages)


def test_empty_file_yields_empty_stream(tmp_path):
    path = write_lines(tmp_path, "empty.txt", [])
    stats = LoadStats()
    assert list(load_seed(path, stats=stats)) == []
    assert stats.skipped == 0
    assert stats.yielded == 0


def test_blank_lines_are_skipped_and_counted(tmp_path):
    path = write_lines(tmp_path, "f", ["one", "   ", "two"])
    stats = LoadStats()
    passages = list(load_seed(path, stats=stats))
    assert len(passages) == 2
    assert stats.skipped == 1
    assert stats.yielded == 2


def test_record_stream_parses_fields_and_skips_malformed(tmp_path):
    rows = [
        json.dumps({"text": "first", "id": "x1", "source": "web"}),
        "{not json",
        json.dumps({"no_text": True}),
        json.dumps({"text": "second"}),
    ]
    path = write_lines(tmp_path, "records.jsonl", rows)
    stats = LoadStats()
    passages = list(load_seed(path, format="record-stream", stats=stats))
    assert [p.id for p in passages] == ["x1", "records.jsonl:1"]
    assert passages[0].source == "web"
    assert stats.skipped == 2


def test_record_stream_duplicate_ids_are_skipped(tmp_path):
    rows = [json.dumps({"text": "a", "id": "dup"}), json.dumps({"text": "b", "id": "dup"})]
    path = write_lines(tmp_path, "records.jsonl", rows)
    stats = LoadStats()
    passages = list(load_seed(path, format="record-stream", stats=stats))
    assert len(passages) == 1
    assert stats.skipped == 1


def test_unknown_format_rejected(tmp_path):
    path = write_lines(tmp_path, "f", ["x"])
    with pytest.raises(ConfigError):
        list(load_seed(path, format="parquet"))


def test_unreadable_path_raises(tmp_path):
    with pytest.raises(OSError):
        list(load_seed(tmp_path / "missing.txt"))


def test_sampling_is_deterministic(tmp_path):
    path = write_lines(tmp_path, "f", [f"passage number {i}" for i in range(100)])
    cfg = SamplingConfig(count=10, rng_seed=1)
    first = sample_passages(load_seed(path), cfg)
    second = sample_passages(load_seed(path), cfg)
    assert [p.id for p in first.passages] == [p.id for p in second.passages]
    assert len(first.passages) == 10
    other = sample_passages(load_seed(path), SamplingConfig(count=10, rng_seed=2))
    assert [p.id for p in other.passages] != [p.id for p in first.passages]


def test_sampling_output_sorted_by_id(tmp_path):
    path = write_lines(tmp_path, "f", [f"passage number {i}" for i in range(50)])
    result = sample_passages(load_seed(path), SamplingConfig(count=20, rng_seed=7))
    ids = [p.id for p in result.passages]
    assert ids == sorted(ids)


def test_length_bounds_filter_eligibility(tmp_path):
    texts = ["x" * 5, "y" * 50, "z" * 5000]
    path = write_lines(tmp_path, "f", texts)
    cfg = SamplingConfig(count=10, rng_seed=1, min_chars=10, max_chars=1000)
    result = sample_passages(load_seed(path), cfg)
    assert [p.text for p in result.passages] == ["y" * 50]
    assert result.eligible == 1


def test_length_bounds_count_unicode_scalars(tmp_path):
    # Four CJK characters: 4 scalar values even though 12 UTF-8 bytes.
    path = write_lines(tmp_path, "f", ["热带风暴"])
    cfg = SamplingConfig(count=1, rng_seed=1, min_chars=4, max_chars=4)
    result = sample_passages(load_seed(path), cfg)
    assert len(result.passages) == 1


def test_dedup_removes_exact_duplicates_and_reports_shortfall(tmp_path):
    path = write_lines(tmp_path, "f", ["same text", "same text"])
    result = sample_passages(load_seed(path), SamplingConfig(count=2, rng_seed=1, dedup=True))
    assert len(result.passages) == 1
    assert result.shortfall == 1
    assert result.duplicates_removed == 1


def test_dedup_uses_nfc_normalization(tmp_path):
    # e-acute composed vs decomposed normalize to the same text.
    path = write_lines(tmp_path, "f", ["café", "café"])
    result = sample_passages(load_seed(path), SamplingConfig(count=2, rng_seed=1, dedup=True))
    assert len(result.passages) == 1


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        SamplingConfig(count=0).validate()
    with pytest.raises(ConfigError):
        SamplingConfig(count=1, min_chars=10, max_chars=5).validate()


def test_sampled_passages_respect_bounds_property(tmp_path):
    rng = random.Random(99)
    lines = ["w" * rng.randint(1, 120) for _ in range(300)]
    path = write_lines(tmp_path, "f", lines)
    cfg = SamplingConfig(count=40, rng_seed=3, min_chars=20, max_chars=90, dedup=True)
    result = sample_passages(load_seed(path), cfg)
    assert result.passages, "expected a non-empty sample"
    texts = [p.text for p in result.passages]
    assert all(20 <= len(t) <= 90 for t in texts)
    assert len(set(texts)) == len(texts)
