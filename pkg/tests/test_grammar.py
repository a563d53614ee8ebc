import random

import pytest
from hypothesis import given, strategies as st

from coxql.grammar import (
    END, ID, NUMBER, WORD, DeadState, Grammar, GrammarError, StepLimitExceeded, accepts,
    allowed_next, build_grammar, constrained_decode, initial_state, is_complete, literal, matches,
    random_sentence, recognize, step,
)
from coxql.qlcore import BackendFailure, canonicalize, is_valid
from strategies import valid_asts

G = build_grammar()


def _after(text):
    state = initial_state(G)
    for tok in text.split():
        state = step(state, tok)
    return state


def test_start_set():
    start = allowed_next(initial_state(G))
    filters = {literal(k) for k in ("filter", "predfilter", "labelfilter", "lengthfilter", "previousfilter",
                                    "includes")}
    standalone = {literal(k) for k in ("mistake", "score", "countdata", "label", "keywords", "function",
                                       "qatutorial", "data", "model", "domain")}
    assert start == filters | standalone


def test_masks():
    assert allowed_next(_after("mistake")) == {literal("count"), literal("sample")}
    assert allowed_next(_after("keywords topk")) == {NUMBER}
    assert allowed_next(_after("filter")) == {literal("id")}
    assert allowed_next(_after("filter id")) == {ID}
    assert allowed_next(_after("labelfilter")) == {WORD}
    state = _after("filter id 3 and nlpattribute")
    assert literal("topk") in allowed_next(state) and literal("all") in allowed_next(state)
    assert not is_complete(state)
    assert is_complete(_after("filter id 3 and nlpattribute all default"))


def test_meta_ops_take_no_filters():
    assert literal("model") not in allowed_next(_after("filter id 3 and"))


@pytest.mark.parametrize("text", [
    "mistake accuracy", "predict", "score accuracy f1", "filter id 3 or predict",
    "filter id 3 and nlpattribute default", "keywords topk 0", "labelfilter score and countdata",
])
def test_rejects(text):
    assert not accepts(G, text)


def test_step_rejects_bad_token():
    with pytest.raises(DeadState):
        step(initial_state(G), "predict")


def test_terminal_classes():
    assert matches("0", ID) and not matches("0", NUMBER) and matches("7", NUMBER)
    assert matches("positive", WORD) and not matches("topk", WORD)


def test_dump_round_trip():
    text = G.dumps()
    again = Grammar.loads(text)
    assert again == G
    assert again.dumps() == text
    assert "query :=" in text


def test_check_flags_undefined_symbols():
    with pytest.raises(GrammarError):
        Grammar({"query": (("missing",),)}, "query").check()


def test_random_walks_are_valid():
    rng = random.Random(7)
    for _ in range(300):
        s = random_sentence(G, rng)
        assert accepts(G, s) and is_valid(s) and canonicalize_text(s) == s


def canonicalize_text(s):
    from coxql.qlcore import parse_query
    return canonicalize(parse_query(s))


@given(valid_asts())
def test_recognizer_accepts_valid_asts(query):
    assert recognize(G, canonicalize(query).split())


@given(valid_asts(), st.integers(0, 10))
def test_prefixes_never_dead(query, cut):
    toks = canonicalize(query).split()
    state = initial_state(G)
    for tok in toks[: min(cut, len(toks) - 1)]:
        state = step(state, tok)
    assert allowed_next(state)


class _Adversary:
    """Always prefers the alphabetically last free-form token."""

    can_score = True

    def score_terminals(self, prompt, partial, candidates):
        return {c: float(i) for i, c in enumerate(sorted(candidates))}

    def fill_literal(self, prompt, partial, terminal_class):
        return {WORD: "zzz", ID: "0", NUMBER: "9"}[terminal_class]


def test_adversarial_scorer_stays_in_language():
    try:
        s = constrained_decode(_Adversary(), G, "")
    except StepLimitExceeded:
        return
    assert accepts(G, s)


class _Looper(_Adversary):
    def score_terminals(self, prompt, partial, candidates):
        loop = {literal("previousfilter"), literal("or")}
        return {c: (-1.0 if c == END else 1.0 if c in loop else 0.5) for c in candidates}


def test_step_guard():
    with pytest.raises(StepLimitExceeded):
        constrained_decode(_Looper(), G, "", max_steps=16)


class _BadLiteral(_Adversary):
    def fill_literal(self, prompt, partial, terminal_class):
        return "not a number"


def test_invalid_backend_literal():
    scorer = _BadLiteral()
    scorer.score_terminals = lambda p, part, c: {x: (1.0 if x in (literal("filter"), literal("id"), ID) else 0.0)
                                                 for x in c}
    with pytest.raises(BackendFailure):
        constrained_decode(scorer, G, "")
