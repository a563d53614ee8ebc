import random
import threading

import pytest
from hypothesis import given, strategies as st

from coxql.eval import (
    INVALID, CategoryScore, EvalReport, LengthMismatch, accuracy_table, build_report, category_f1,
    category_table, corrupt_suite, diff_tokens, exact_match, per_category_f1, predict_all, run_eval,
    to_csv,
)
from coxql.lmbackend import CorruptingBackend, CorruptionProfile, OracleBackend
from coxql.pipelines import Prediction
from coxql.qlcore import BackendFailure


def test_exact_match():
    assert not exact_match("filter id 3 and nlpattribute all default", "filter id 3 and nlpattribute topk 3 default")
    assert exact_match("score accuracy", "score accuracy")
    assert exact_match("Score   ACCURACY", "score accuracy")
    assert exact_match("filter id 3 and nlpattribute default", "filter id 3 and nlpattribute all default")


def test_toy_f1():
    out = category_f1(["Data", "Meta", "Meta"], ["Data", "Data", "Meta"])
    assert set(out) == {"Data", "Meta"}
    assert out["Data"].precision == pytest.approx(1.0, abs=1e-9)
    assert out["Data"].recall == pytest.approx(0.5, abs=1e-9)
    assert out["Data"].f1 == pytest.approx(2 / 3, abs=1e-9)
    assert out["Meta"].precision == pytest.approx(0.5, abs=1e-9)
    assert out["Meta"].recall == pytest.approx(1.0, abs=1e-9)
    assert out["Meta"].f1 == pytest.approx(2 / 3, abs=1e-9)


def test_f1_from_parses():
    preds = ["filter id 1 and show", "model", "model"]
    golds = ["filter id 1 and show", "countdata", "domain"]
    out = per_category_f1(preds, golds)
    assert out["Data"].f1 == pytest.approx(2 / 3) and out["Meta"].recall == 1.0
    assert "FilterLogic" not in out


def test_invalid_is_false_negative():
    out = per_category_f1(["garbage", "score accuracy"], ["score f1", "score accuracy"], [False, True])
    assert out["GlobalPrediction"] == CategoryScore(1.0, 0.5, pytest.approx(2 / 3), 2)
    assert INVALID not in out


def test_all_correct_is_full_f1(test_split):
    golds = [ex.gold_parse for ex in test_split]
    assert all(s.f1 == 1.0 for s in per_category_f1(golds, golds).values())


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        per_category_f1(["a"], [])
    with pytest.raises(LengthMismatch):
        build_report("mp", "x", ["q"], ["model"], [])


@pytest.mark.parametrize("pred, gold, mask", [
    ("filter id 3 and nlpattribute topk 3 lime", "filter id 3 and nlpattribute topk 3 default",
     (True,) * 7 + (False,)),
    ("score accuracy", "score accuracy", (True, True)),
    ("model", "score accuracy", (False,)),
    ("", "model", ()),
])
def test_diff_tokens(pred, gold, mask):
    assert diff_tokens(pred, gold) == mask


@given(st.lists(st.sampled_from(["a", "b", "c"]), max_size=8), st.lists(st.sampled_from(["a", "b", "c"]), max_size=8))
def test_diff_mask_is_common_subsequence(a, b):
    mask = diff_tokens(" ".join(a), " ".join(b))
    picked = [t for t, m in zip(a, mask) if m]
    it = iter(b)
    assert all(tok in it for tok in picked)


POOL = ["score accuracy", "score f1", "model", "filter id 3 and predict", "mistake count", "garbage", "",
        "filter id 3 and nlpattribute all default", "filter id 3 and nlpattribute default"]


@given(st.lists(st.tuples(st.sampled_from(POOL), st.sampled_from(POOL[:5] + POOL[7:8])), min_size=1, max_size=40))
def test_accuracy_recount(pairs):
    preds = [Prediction(p, p not in ("garbage", "")) for p, _ in pairs]
    golds = [g for _, g in pairs]
    report = build_report("mp", "stub", [f"q{i}" for i in range(len(pairs))], golds, preds)
    brute = sum(p.valid and exact_match(p.text, g) for p, g in zip(preds, golds)) / len(pairs)
    assert report.accuracy == brute


def test_report_round_trip_and_shuffle(test_split, train):
    backend = CorruptingBackend(OracleBackend(test_split.mapping()), CorruptionProfile.uniform(0.5, seed=1))
    report = run_eval("mp+", test_split, backend, train)
    assert EvalReport.loads(report.dumps()) == report
    shuffled = list(test_split)
    random.Random(0).shuffle(shuffled)
    from coxql.dataset import Dataset
    other = run_eval("mp+", Dataset(tuple(shuffled)), backend, train)
    assert other.accuracy == report.accuracy and other.per_category == report.per_category
    assert "exact match:" in report.render() and "category-level F1" in report.render()


def test_oracle_ceiling(test_split, train):
    oracle = OracleBackend(test_split.mapping())
    for strategy in ("gd", "mp", "mp+"):
        assert run_eval(strategy, test_split, oracle, train).accuracy == 1.0


def test_backend_failure_is_per_instance():
    def predict(q):
        if q == "bad":
            raise BackendFailure("boom")
        return Prediction("model", True)

    preds = predict_all(predict, ["ok", "bad", "ok"])
    assert [p.valid for p in preds] == [True, False, True]
    assert preds[1].error.startswith("BackendFailure")


def test_concurrency_respects_limit_and_order():
    lock, active, peak = threading.Lock(), [0], [0]

    def predict(q):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        threading.Event().wait(0.01)
        with lock:
            active[0] -= 1
        return Prediction(q, True)

    qs = [f"q{i}" for i in range(20)]
    preds = predict_all(predict, qs, max_concurrency=3)
    assert [p.text for p in preds] == qs and 1 < peak[0] <= 3


def test_tables(test_split, train):
    oracle = OracleBackend(test_split.mapping())
    reports = [run_eval("nn", test_split, None, train), run_eval("mp+", test_split, oracle, train)]
    rows = accuracy_table(reports)
    assert rows[0]["model"] == "lexical-nn" and rows[1]["mp+"] == 100.0
    cat_rows = category_table(reports)
    assert cat_rows[1]["Meta"] == 100.0
    csv_text = to_csv(rows, ["model", "nn", "gd", "mp", "mp+"])
    assert csv_text.splitlines()[0] == "model,nn,gd,mp,mp+"
    assert csv_text.splitlines()[2] == "oracle,,,,100.0"


def test_corrupt_suite(test_split):
    result = corrupt_suite(test_split, seeds=range(2))
    assert result.ok and len(result.rows) == 6 and len(result.dominance) == 2
    assert all(r.restored and r.mp_correct < r.affected for r in result.rows)
