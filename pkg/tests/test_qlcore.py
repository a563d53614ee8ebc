import pytest
from hypothesis import given

from coxql.qlcore import (
    ALL, CATEGORY_OF, REGISTRY, AttributionMethod, Category, FilterClause, Id, IllegalSlot,
    IncompleteQuery, InvalidAst, Metric, MissingInstanceFilter, MistakeMode, NoDefault,
    OperationKind, QueryAst, TopK, TrailingTokens, UnknownOperation, ast, canonicalize, default_fill,
    is_valid, normalize, parse_query, terminal_of, tokenize, validate,
)
from coxql.qlcore import EmptyQuery
from strategies import valid_asts

K = OperationKind


def test_registry_shape():
    assert len(OperationKind) == 31
    assert len(REGISTRY) == 23
    assert len(set(CATEGORY_OF.values())) == 8
    assert all(k.category is Category.FILTER_LOGIC for k in OperationKind if not k.is_terminal)


def test_category_membership():
    assert K.NLPATTRIBUTE.category is Category.LOCAL_EXPLANATION
    assert K.SIMILARITY.category is Category.DATA
    assert K.QATUTORIAL.category is Category.META
    assert K.UNLEARN.category is Category.MODIFICATION


@pytest.mark.parametrize("text, canonical", [
    ("filter id 2451 and nlpattribute default", "filter id 2451 and nlpattribute all default"),
    ("filter id 31 and nlpattribute all input x gradient", "filter id 31 and nlpattribute all input_x_gradient"),
    ("filter id 31 and nlpattribute all inputxgradient", "filter id 31 and nlpattribute all input_x_gradient"),
    ("filter id 9 and nlpattribute topk 2 integrated gradients",
     "filter id 9 and nlpattribute topk 2 integrated_gradient"),
    ("qatutorial qada", "qatutorial qaaugment"),
    ("filter id 12 and similar topk 1", "filter id 12 and similarity topk 1"),
    ("  SCORE   Accuracy ", "score accuracy"),
    ("labelfilter positive or predfilter negative and countdata",
     "labelfilter positive or predfilter negative and countdata"),
    ("lengthfilter token lt 20 and mistake sample", "lengthfilter token lt 20 and mistake sample"),
    ("previousfilter and predict", "previousfilter and predict"),
    ("includes great and show", "includes great and show"),
])
def test_normalize_examples(text, canonical):
    assert normalize(text) == canonical
    assert is_valid(text)


@pytest.mark.parametrize("text, exc", [
    ("", EmptyQuery),
    ("explain id 3", UnknownOperation),
    ("mistake accuracy", IllegalSlot),
    ("filter id 3 and nlpattribute topk", IllegalSlot),
    ("filter id 3 and nlpattribute topk 0 default", IllegalSlot),
    ("predict", MissingInstanceFilter),
    ("filter id 3 and", IncompleteQuery),
    ("score accuracy banana", TrailingTokens),
    ("filter id x and predict", IllegalSlot),
])
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_query(text)


def test_error_spans_point_at_token():
    with pytest.raises(IllegalSlot) as info:
        parse_query("mistake accuracy")
    assert info.value.span == (1, 2)


@pytest.mark.parametrize("text, kinds", [
    ("score accuracy f1", ["SlotArity"]),
    ("filter id 3 and nlpattribute default topk 3", ["SlotOrder"]),
    ("mistake", ["MissingSlot"]),
    ("filter id 3 or predict", ["IllegalConnective"]),
    ("filter id 3 and model", ["IllegalFilter"]),
    ("filter id 3 and nlpattribute lime", []),
])
def test_validation_kinds(text, kinds):
    assert validate(parse_query(text)).kinds() == kinds


def test_validate_reports_missing_instance_on_built_ast():
    report = validate(QueryAst(K.PREDICT))
    assert report.kinds() == ["MissingInstanceFilter"]
    assert not report


def test_default_fill():
    q = default_fill(ast("nlpattribute", [AttributionMethod("lime")], [Id(4)]))
    assert canonicalize(q) == "filter id 4 and nlpattribute all lime"
    assert canonicalize(default_fill(ast("score"))) == "score accuracy"
    assert canonicalize(default_fill(ast("keywords"))) == "keywords topk 1"
    # canonical order regardless of input order, first occurrence wins
    q = default_fill(ast("nlpattribute", [AttributionMethod("lime"), TopK(3), ALL], [Id(1)]))
    assert canonicalize(q) == "filter id 1 and nlpattribute topk 3 lime"
    with pytest.raises(NoDefault):
        default_fill(ast("mistake"))
    with pytest.raises(NoDefault):
        default_fill(ast("qatutorial"))


def test_canonicalize_rejects_invalid():
    with pytest.raises(InvalidAst) as info:
        canonicalize(ast("score", [Metric("accuracy"), Metric("f1")]))
    assert "SlotArity" in str(info.value)


def test_ast_helper_wraps_ids():
    q = ast("predict", filters=[Id(7), (FilterClause(K.LABELFILTER), "or")])
    assert q.filters[0] == (FilterClause(K.FILTER, Id(7)), "and")


def test_slot_value_checks():
    with pytest.raises(ValueError):
        TopK(0)
    with pytest.raises(ValueError):
        MistakeMode("all")
    with pytest.raises(ValueError):
        Id(-1)


def test_tokenize_aliases():
    assert tokenize("Input X Gradient qada similar") == ["input_x_gradient", "qaaugment", "similarity"]


def test_terminal_of():
    assert terminal_of("filter id 1 and show") is K.SHOW
    assert terminal_of("gibberish") is None


def test_bundled_corpus_round_trips(train, test_split):
    for ds in (train, test_split):
        assert not ds.rejects
        for raw, ex in zip(ds.raw, ds):
            assert canonicalize(parse_query(raw)) == ex.gold_parse
            assert canonicalize(parse_query(ex.gold_parse)) == ex.gold_parse


@given(valid_asts())
def test_round_trip_property(query):
    text = canonicalize(query)
    assert parse_query(text) == query
    assert canonicalize(parse_query(text)) == text
    assert normalize(text.upper()) == text


@given(valid_asts())
def test_default_fill_is_identity_on_complete(query):
    assert default_fill(query) == query
