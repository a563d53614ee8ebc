import json

import pytest

from coxql import dataset as ds
from coxql.qlcore import Category, OperationKind


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_load_normalizes_and_rejects(tmp_path):
    path = _write(tmp_path / "c.jsonl", [
        {"question": "Why id 3?", "parse": "filter id 3 and nlpattribute default"},
        {"question": "Why id 3?", "parse": "filter id 3 and nlpattribute all default"},
        {"question": "bad", "parse": "mistake accuracy"},
        {"question": "Accuracy?", "parse": "SCORE  accuracy"},
    ])
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("{not json\n\n")
    data = ds.load(path)
    assert [ex.gold_parse for ex in data] == ["filter id 3 and nlpattribute all default", "score accuracy"]
    assert data.raw == ("filter id 3 and nlpattribute default", "SCORE  accuracy")
    reasons = sorted(r.reason.split(":")[0] for r in data.rejects)
    assert len(reasons) == 3 and "duplicate pair" in reasons
    assert len(data.sha256) == 64


def test_example_intent_and_category():
    ex = ds.Example("q", "filter id 1 and similarity topk 2")
    assert ex.intent is OperationKind.SIMILARITY and ex.category is Category.DATA


def test_empty_and_missing(tmp_path):
    with pytest.raises(ds.EmptyDataset):
        ds.load(_write(tmp_path / "e.jsonl", [{"question": "x", "parse": "nonsense"}]))
    with pytest.raises(ds.IoFailure):
        ds.load(tmp_path / "missing.jsonl")


def test_tsv_conversion(tmp_path):
    src = tmp_path / "c.tsv"
    src.write_text("What is the accuracy?\tscore accuracy\nShow id 4\tfilter id 4 and show\n", encoding="utf-8")
    dst = tmp_path / "c.jsonl"
    converted = ds.convert_tsv(src, dst)
    assert ds.load(dst) == converted
    assert dst.read_text().splitlines()[0] == '{"question": "What is the accuracy?", "parse": "score accuracy"}'
    with pytest.raises(ds.DataError):
        ds.convert_tsv(dst, tmp_path / "x.jsonl")


def test_dump_round_trip(tmp_path, train):
    out = tmp_path / "t.jsonl"
    ds.dump(train, out)
    assert ds.load(out) == train


def test_statistics(train):
    stats = ds.statistics(train)
    assert stats["examples"] == len(train) == sum(stats["intents"].values())
    assert sum(stats["categories"].values()) == len(train)
    assert len(stats["intents"]) == 23
    counts = list(stats["intents"].values())
    assert counts == sorted(counts, reverse=True)
    text = ds.render_statistics(stats)
    assert "nlpattribute" in text and "category counts" in text


def test_bundled_splits_are_disjoint(train, test_split):
    assert not set(train.questions) & set(test_split.questions)
    with pytest.raises(ValueError):
        ds.bundled_split("dev")


def test_released_split_lookup(tmp_path):
    assert ds.released_split("train", None) is None
    assert ds.released_split("train", str(tmp_path)) is None
    _write(tmp_path / "train.jsonl", [{"question": "Accuracy?", "parse": "score accuracy"}])
    assert len(ds.released_split("train", str(tmp_path))) == 1
