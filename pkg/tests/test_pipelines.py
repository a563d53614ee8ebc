import random

import pytest
from hypothesis import given, strategies as st

from coxql.lmbackend import (
    CORRUPTION_CLASSES, CorruptingBackend, CorruptionProfile, OracleBackend, applicable,
)
from coxql.pipelines import (
    PromptBundle, RepairFlags, StageOneUnknownOperation, Unrepairable, default_prompts,
    extract_operation, gd_parse, make_strategy, mp_parse, mp_plus_parse, question_ids, question_topk,
    template_check,
)
from coxql.qlcore import REGISTRY, canonicalize, is_valid
from stubs import ScriptedBackend
from strategies import valid_asts

TOPK_Q = "Top 3 important features for id 3!"
TOPK_GOLD = "filter id 3 and nlpattribute topk 3 default"


def test_prompt_bundle_coverage():
    bundle = default_prompts()
    ops = {op for _, op in bundle.coarse_demos}
    assert ops == {k.value for k in REGISTRY}
    for op, demos in bundle.fine_demos.items():
        assert all(is_valid(p) for _, p in demos), op
    prompt = bundle.coarse_prompt("What is the accuracy?")
    assert prompt.endswith("Question: What is the accuracy?\nOperation:\n")
    assert "{question}" not in prompt and "{demonstrations}" not in prompt
    assert "Question: Give me the accuracy on the data.\nParse: score accuracy" in bundle.fine_prompt("score", "x")


def test_prompt_bundle_rejects_missing_operation():
    bundle = default_prompts()
    with pytest.raises(ValueError):
        PromptBundle(bundle.coarse_template, bundle.fine_template, bundle.gd_template,
                     bundle.coarse_demos[1:], bundle.fine_demos)


@pytest.mark.parametrize("output, op", [
    ("the operation is nlpattribute because the user asks why", "nlpattribute"),
    ("Operation: score.", "score"),
    ("filter id 3 and predict", "predict"),
    ("I think a tutorial", "qatutorial"),
])
def test_extract_operation(output, op):
    assert extract_operation(output) == op


def test_extract_operation_failure():
    with pytest.raises(StageOneUnknownOperation):
        extract_operation("no idea at all")


def test_question_patterns():
    assert question_ids("What is the prediction for data point number 9130?") == [9130]
    assert question_ids("Why do you predict instance 2451?") == [2451]
    assert question_ids("Give me the accuracy on the data.") == []
    assert question_topk(TOPK_Q) == 3
    assert question_topk("the five most important words") == 5
    assert question_topk("show topk 7 tokens") == 7
    assert question_topk("Why id 3?") is None


def test_topk_fixture_flag_off_and_on():
    raw = "filter id 3 and nlpattribute attention all"
    off = template_check(raw, TOPK_Q, RepairFlags(topk_from_question=False))
    assert off.final == "filter id 3 and nlpattribute all default"
    on = template_check(raw, TOPK_Q)
    assert on.final == TOPK_GOLD
    assert "reorder" in on.step_names and on.step_names[-1] == "validate"


def test_multi_metric_fix():
    trace = template_check("score accuracy f1", "Give me the accuracy on the data.")
    assert trace.final == "score accuracy"
    assert trace.step_names == ["slot-prune", "validate"]


def test_valid_input_untouched():
    trace = template_check(TOPK_GOLD, TOPK_Q)
    assert trace.final == TOPK_GOLD and trace.step_names == ["validate"]


@pytest.mark.parametrize("raw, question, final", [
    ("nlpattribute topk 3 default", TOPK_Q, TOPK_GOLD),
    ("filter id 3 and nlpattribute topk default", TOPK_Q, TOPK_GOLD),
    ("filter id 8 and nlpattribute topk 3 default", TOPK_Q, TOPK_GOLD),
    ("Parse: Filter ID 3 and NLPattribute topk 3 default.", TOPK_Q, TOPK_GOLD),
    ("id 3 and nlpattribute topk 3 lime", TOPK_Q, TOPK_GOLD),
    ("mistake", "How many errors does the model make?", "mistake count"),
    ("tutorial", "What is data augmentation?", "qatutorial qaaugment"),
    ("score", "Tell me the recall score.", "score recall"),
    ("keywords topk", "What are the most frequent keywords?", "keywords topk 1"),
    ("similarity", "Show 4 most similar examples to id 12", "filter id 12 and similarity topk 4"),
    ("nlpattribute all", "Why do you predict instance id 31 using input gradient?",
     "filter id 31 and nlpattribute all input_x_gradient"),
    ("predict topk 3 lime", "What is the prediction for data point number 9130?", "filter id 9130 and predict"),
])
def test_repairs(raw, question, final):
    assert template_check(raw, question).final == final


@pytest.mark.parametrize("raw, question", [
    ("gibberish tokens", "Why id 3?"),
    ("   ", "x"),
    ("mistake", "mistakes?"),
    ("predict", "predict the thing"),
])
def test_unrepairable(raw, question):
    with pytest.raises(Unrepairable) as info:
        template_check(raw, question)
    assert info.value.trace is not None and info.value.trace.final is None


def test_keeps_correct_ids_with_several_in_question():
    q = "Compare instance 4 and instance 9"
    assert template_check("filter id 9 and predict", q).final == "filter id 9 and predict"


@given(valid_asts(), st.sampled_from(["", TOPK_Q, "How many id 7 top 2 lime?", "most similar"]))
def test_idempotent(query, question):
    raw = canonicalize(query)
    try:
        first = template_check(raw, question).final
    except Unrepairable:
        return
    again = template_check(first, question)
    assert again.final == first and again.step_names == ["validate"]


@given(st.integers(0, 99999), st.sampled_from(["predict", "show", "nlpattribute topk 2 lime", "cfe"]))
def test_never_removes_correct_id(n, tail):
    question = f"What about id {n}?"
    final = template_check(f"filter id {n} and {tail}", question).final
    assert f"filter id {n} " in final + " "


def test_oracle_strategies(train, test_split):
    oracle = OracleBackend(test_split.mapping())
    for ex in list(test_split)[:15]:
        assert mp_parse(ex.question, oracle) == ex.gold_parse
        pred = mp_plus_parse(ex.question, oracle)
        assert pred.text == ex.gold_parse and pred.trace.substantive == []
        assert gd_parse(ex.question, oracle, train=train).text == ex.gold_parse


def test_gd_without_scoring_validates(train):
    backend = ScriptedBackend(["filter id 3 and nlpattribute topk"])
    pred = gd_parse(TOPK_Q, backend, train=train)
    assert not pred.valid and pred.text == "filter id 3 and nlpattribute topk"
    assert "Question: " + TOPK_Q in backend.prompts[0]
    assert backend.prompts[0].count("Question:") == 21


def test_mp_returns_raw_and_mp_plus_repairs():
    backend = ScriptedBackend(["nlpattribute", "filter id 3 and nlpattribute input_x_gradient topk"])
    assert mp_parse(TOPK_Q, backend) == "filter id 3 and nlpattribute input_x_gradient topk"
    backend = ScriptedBackend(["nlpattribute", "filter id 3 and nlpattribute input_x_gradient topk"])
    assert mp_plus_parse(TOPK_Q, backend).text == TOPK_GOLD


def test_mp_plus_marks_unrepairable_invalid():
    backend = ScriptedBackend(["model", "gibberish tokens"])
    pred = mp_plus_parse("Tell me about the model", backend)
    assert not pred.valid and pred.text == "gibberish tokens"


def test_make_strategy_stage_one_failure():
    predict = make_strategy("mp", ScriptedBackend(["no idea"]))
    pred = predict("q")
    assert not pred.valid and "stage-1" in pred.error
    with pytest.raises(ValueError):
        make_strategy("mp")
    with pytest.raises(ValueError):
        make_strategy("best")


@pytest.mark.parametrize("name", CORRUPTION_CLASSES)
def test_repair_guarantee_per_class(name, test_split):
    backend = CorruptingBackend(OracleBackend(test_split.mapping()), CorruptionProfile.only(name))
    affected = [ex for ex in test_split if applicable(name, ex.gold_parse)]
    assert affected
    mp = make_strategy("mp", backend)
    mpp = make_strategy("mp+", backend)
    assert all(mpp(ex.question).text == ex.gold_parse for ex in affected)
    assert sum(mp(ex.question).text == ex.gold_parse for ex in affected) < len(affected)


def test_dominance_random_profiles(test_split):
    rng = random.Random(3)
    oracle = OracleBackend(test_split.mapping())
    for seed in range(3):
        profile = CorruptionProfile({c: rng.random() for c in CORRUPTION_CLASSES}, seed=seed)
        backend = CorruptingBackend(oracle, profile)
        mp, mpp = make_strategy("mp", backend), make_strategy("mp+", backend)
        hits_mp = sum(mp(ex.question).valid and mp(ex.question).text == ex.gold_parse for ex in test_split)
        hits_mpp = sum(mpp(ex.question).text == ex.gold_parse for ex in test_split)
        assert hits_mpp >= hits_mp
