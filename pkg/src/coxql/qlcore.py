"""The CoXQL query language: operation registry, slot schemas, AST, parsing.

A query is an optional chain of filter clauses joined by ``and``/``or``,
followed by exactly one terminal operation and its slots::

    filter id 3 and nlpattribute topk 3 default
    labelfilter positive or predfilter negative and countdata
    score accuracy

Canonical strings are lower-case, single-space separated and carry every
slot explicitly (``nlpattribute default`` is read as ``nlpattribute all
default``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Union


class Category(str, Enum):
    LOCAL_PREDICTION = "LocalPrediction"
    GLOBAL_PREDICTION = "GlobalPrediction"
    LOCAL_EXPLANATION = "LocalExplanation"
    PERTURBATION = "Perturbation"
    DATA = "Data"
    MODIFICATION = "Modification"
    META = "Meta"
    FILTER_LOGIC = "FilterLogic"


class OperationKind(str, Enum):
    PREDICT = "predict"
    LIKELIHOOD = "likelihood"
    MISTAKE = "mistake"
    SCORE = "score"
    NLPATTRIBUTE = "nlpattribute"
    RATIONALIZE = "rationalize"
    INFLUENCE = "influence"
    CFE = "cfe"
    ADVERSARIAL = "adversarial"
    AUGMENT = "augment"
    SHOW = "show"
    COUNTDATA = "countdata"
    LABEL = "label"
    KEYWORDS = "keywords"
    SIMILARITY = "similarity"
    EDITLABEL = "editlabel"
    LEARN = "learn"
    UNLEARN = "unlearn"
    FUNCTION = "function"
    QATUTORIAL = "qatutorial"
    DATA = "data"
    MODEL = "model"
    DOMAIN = "domain"
    # filter / logic
    FILTER = "filter"
    PREDFILTER = "predfilter"
    LABELFILTER = "labelfilter"
    LENGTHFILTER = "lengthfilter"
    PREVIOUSFILTER = "previousfilter"
    INCLUDES = "includes"
    AND = "and"
    OR = "or"

    @property
    def category(self) -> Category:
        return CATEGORY_OF[self]

    @property
    def is_terminal(self) -> bool:
        return self in REGISTRY


_C = Category
_K = OperationKind
CATEGORY_OF: Mapping[OperationKind, Category] = MappingProxyType({
    _K.PREDICT: _C.LOCAL_PREDICTION,
    _K.LIKELIHOOD: _C.LOCAL_PREDICTION,
    _K.MISTAKE: _C.GLOBAL_PREDICTION,
    _K.SCORE: _C.GLOBAL_PREDICTION,
    _K.NLPATTRIBUTE: _C.LOCAL_EXPLANATION,
    _K.RATIONALIZE: _C.LOCAL_EXPLANATION,
    _K.INFLUENCE: _C.LOCAL_EXPLANATION,
    _K.CFE: _C.PERTURBATION,
    _K.ADVERSARIAL: _C.PERTURBATION,
    _K.AUGMENT: _C.PERTURBATION,
    _K.SHOW: _C.DATA,
    _K.COUNTDATA: _C.DATA,
    _K.LABEL: _C.DATA,
    _K.KEYWORDS: _C.DATA,
    _K.SIMILARITY: _C.DATA,
    _K.EDITLABEL: _C.MODIFICATION,
    _K.LEARN: _C.MODIFICATION,
    _K.UNLEARN: _C.MODIFICATION,
    _K.FUNCTION: _C.META,
    _K.QATUTORIAL: _C.META,
    _K.DATA: _C.META,
    _K.MODEL: _C.META,
    _K.DOMAIN: _C.META,
    _K.FILTER: _C.FILTER_LOGIC,
    _K.PREDFILTER: _C.FILTER_LOGIC,
    _K.LABELFILTER: _C.FILTER_LOGIC,
    _K.LENGTHFILTER: _C.FILTER_LOGIC,
    _K.PREVIOUSFILTER: _C.FILTER_LOGIC,
    _K.INCLUDES: _C.FILTER_LOGIC,
    _K.AND: _C.FILTER_LOGIC,
    _K.OR: _C.FILTER_LOGIC,
})

FILTER_KINDS = frozenset({
    _K.FILTER, _K.PREDFILTER, _K.LABELFILTER, _K.LENGTHFILTER,
    _K.PREVIOUSFILTER, _K.INCLUDES,
})
CONNECTIVES = ("and", "or")

MISTAKE_MODES = ("sample", "count")
METRICS = ("accuracy", "precision", "recall", "f1", "roc")
ATTRIBUTION_METHODS = ("default", "attention", "lime", "integrated_gradient", "input_x_gradient")
TUTORIAL_TOPICS = (
    "qaattribute", "qarationalize", "qainfluence", "qacfe", "qaadversarial",
    "qaaugment", "qaeditlabel", "qalearn", "qaunlearn",
)
LENGTH_LEVELS = ("character", "token", "sentence")
COMPARATORS = ("gt", "lt")

# Single-token aliases resolved during tokenization.
TOKEN_ALIASES: Mapping[str, str] = MappingProxyType({
    "similar": "similarity",
    "qada": "qaaugment",
    "inputxgradient": "input_x_gradient",
    "integrated_gradients": "integrated_gradient",
})
# Multi-word method names, longest first.
_PHRASE_ALIASES = (
    (("input", "x", "gradient"), "input_x_gradient"),
    (("integrated", "gradients"), "integrated_gradient"),
    (("integrated", "gradient"), "integrated_gradient"),
)


# --------------------------------------------------------------------------
# slot values


@dataclass(frozen=True)
class TopK:
    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"topk must be a positive integer, got {self.n!r}")

    def tokens(self) -> tuple[str, ...]:
        return ("topk", str(self.n))


@dataclass(frozen=True)
class All:
    def tokens(self) -> tuple[str, ...]:
        return ("all",)


ALL = All()


def _member(name: str, pool: tuple[str, ...], what: str) -> None:
    if name not in pool:
        raise ValueError(f"unknown {what} {name!r}")


@dataclass(frozen=True)
class MistakeMode:
    mode: str

    def __post_init__(self):
        _member(self.mode, MISTAKE_MODES, "mistake mode")

    def tokens(self) -> tuple[str, ...]:
        return (self.mode,)


@dataclass(frozen=True)
class Metric:
    name: str

    def __post_init__(self):
        _member(self.name, METRICS, "metric")

    def tokens(self) -> tuple[str, ...]:
        return (self.name,)


@dataclass(frozen=True)
class AttributionMethod:
    name: str

    def __post_init__(self):
        _member(self.name, ATTRIBUTION_METHODS, "attribution method")

    def tokens(self) -> tuple[str, ...]:
        return (self.name,)


@dataclass(frozen=True)
class TutorialTopic:
    name: str

    def __post_init__(self):
        _member(self.name, TUTORIAL_TOPICS, "tutorial topic")

    def tokens(self) -> tuple[str, ...]:
        return (self.name,)


@dataclass(frozen=True)
class LengthSpec:
    level: str
    comparator: str
    length: int

    def __post_init__(self):
        _member(self.level, LENGTH_LEVELS, "length level")
        _member(self.comparator, COMPARATORS, "comparator")
        if isinstance(self.length, bool) or not isinstance(self.length, int) or self.length < 1:
            raise ValueError(f"length must be a positive integer, got {self.length!r}")

    def tokens(self) -> tuple[str, ...]:
        return (self.level, self.comparator, str(self.length))


@dataclass(frozen=True)
class Label:
    text: str

    def __post_init__(self):
        if not is_word(self.text):
            raise ValueError(f"illegal label {self.text!r}")

    def tokens(self) -> tuple[str, ...]:
        return (self.text,)


@dataclass(frozen=True)
class Token:
    text: str

    def __post_init__(self):
        if not is_word(self.text):
            raise ValueError(f"illegal token {self.text!r}")

    def tokens(self) -> tuple[str, ...]:
        return (self.text,)


@dataclass(frozen=True)
class Id:
    value: int

    def __post_init__(self):
        if isinstance(self.value, bool) or not isinstance(self.value, int) or self.value < 0:
            raise ValueError(f"id must be a non-negative integer, got {self.value!r}")

    def tokens(self) -> tuple[str, ...]:
        return ("id", str(self.value))


SlotValue = Union[TopK, All, MistakeMode, Metric, AttributionMethod, TutorialTopic,
                  LengthSpec, Label, Token, Id]


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class SlotPosition:
    name: str
    variants: tuple[type, ...]
    default: Optional[SlotValue] = None

    def accepts(self, value) -> bool:
        return isinstance(value, self.variants)


@dataclass(frozen=True)
class OperationSpec:
    kind: OperationKind
    slots: tuple[SlotPosition, ...] = ()
    requires_instance_filter: bool = False
    accepts_filters: bool = True

    @property
    def defaults(self) -> tuple[Optional[SlotValue], ...]:
        return tuple(p.default for p in self.slots)

    def position_of(self, value) -> Optional[int]:
        for i, pos in enumerate(self.slots):
            if pos.accepts(value):
                return i
        return None


_TOPK1 = SlotPosition("topk", (TopK,), TopK(1))


def _build_registry() -> dict[OperationKind, OperationSpec]:
    instance_ops = {
        _K.PREDICT, _K.LIKELIHOOD, _K.NLPATTRIBUTE, _K.RATIONALIZE, _K.INFLUENCE,
        _K.CFE, _K.ADVERSARIAL, _K.AUGMENT, _K.SHOW, _K.SIMILARITY,
        _K.EDITLABEL, _K.LEARN, _K.UNLEARN,
    }
    slots = {
        _K.NLPATTRIBUTE: (
            SlotPosition("range", (All, TopK), ALL),
            SlotPosition("method", (AttributionMethod,), AttributionMethod("default")),
        ),
        _K.INFLUENCE: (_TOPK1,),
        _K.KEYWORDS: (_TOPK1,),
        _K.SIMILARITY: (_TOPK1,),
        _K.MISTAKE: (SlotPosition("mode", (MistakeMode,)),),
        _K.SCORE: (SlotPosition("metric", (Metric,), Metric("accuracy")),),
        _K.QATUTORIAL: (SlotPosition("topic", (TutorialTopic,)),),
    }
    registry = {}
    for kind in OperationKind:
        if kind in FILTER_KINDS or kind in (_K.AND, _K.OR):
            continue
        registry[kind] = OperationSpec(
            kind=kind,
            slots=slots.get(kind, ()),
            requires_instance_filter=kind in instance_ops,
            accepts_filters=CATEGORY_OF[kind] is not Category.META,
        )
    return registry


REGISTRY: Mapping[OperationKind, OperationSpec] = MappingProxyType(_build_registry())
TERMINAL_KINDS = tuple(REGISTRY)

_SLOT_VOCAB: dict[str, type] = {}
for _name in MISTAKE_MODES:
    _SLOT_VOCAB[_name] = MistakeMode
for _name in METRICS:
    _SLOT_VOCAB[_name] = Metric
for _name in ATTRIBUTION_METHODS:
    _SLOT_VOCAB[_name] = AttributionMethod
for _name in TUTORIAL_TOPICS:
    _SLOT_VOCAB[_name] = TutorialTopic
_SLOT_VOCAB["all"] = All
_SLOT_VOCAB["topk"] = TopK

RESERVED_WORDS = frozenset(
    {k.value for k in OperationKind} | set(_SLOT_VOCAB) | set(LENGTH_LEVELS)
    | set(COMPARATORS) | {"id"}
)
_WORD_RE = re.compile(r"[a-z0-9][a-z0-9_'\-]*")
_INT_RE = re.compile(r"\d+")


def is_word(text: str) -> bool:
    """True for a free-text label/token argument (never a reserved word)."""
    return bool(_WORD_RE.fullmatch(text)) and text not in RESERVED_WORDS


def spec_for(kind: OperationKind) -> OperationSpec:
    return REGISTRY[kind]


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class FilterClause:
    kind: OperationKind
    arg: Optional[SlotValue] = None

    def tokens(self) -> tuple[str, ...]:
        head = "filter" if self.kind is _K.FILTER else self.kind.value
        return (head,) + (self.arg.tokens() if self.arg is not None else ())


_FILTER_ARG = {
    _K.FILTER: Id,
    _K.PREDFILTER: Label,
    _K.LABELFILTER: Label,
    _K.LENGTHFILTER: LengthSpec,
    _K.PREVIOUSFILTER: type(None),
    _K.INCLUDES: Token,
}


@dataclass(frozen=True)
class QueryAst:
    terminal: OperationKind
    slots: tuple = ()
    filters: tuple[tuple[FilterClause, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        object.__setattr__(self, "filters", tuple((c, conn) for c, conn in self.filters))

    @property
    def category(self) -> Category:
        return CATEGORY_OF[self.terminal]

    def tokens(self) -> tuple[str, ...]:
        out: list[str] = []
        for clause, conn in self.filters:
            out.extend(clause.tokens())
            out.append(conn)
        out.append(self.terminal.value)
        for slot in self.slots:
            out.extend(slot.tokens())
        return tuple(out)


def ast(terminal, slots: Iterable = (), filters: Iterable = ()) -> QueryAst:
    """Build a QueryAst; bare clauses in ``filters`` are joined with ``and``."""
    if isinstance(terminal, str):
        terminal = OperationKind(terminal)
    chain = []
    for item in filters:
        if isinstance(item, tuple):
            chain.append(item)
        elif isinstance(item, Id):
            chain.append((FilterClause(_K.FILTER, item), "and"))
        else:
            chain.append((item, "and"))
    return QueryAst(terminal=terminal, slots=tuple(slots), filters=tuple(chain))


# --------------------------------------------------------------------------
# errors


class CoxqlError(Exception):
    """Base class for all errors raised by this package."""


class QuerySyntaxError(CoxqlError, ValueError):
    def __init__(self, message: str, span: tuple[int, int] = (0, 0)):
        super().__init__(message)
        self.span = span


class EmptyQuery(QuerySyntaxError):
    pass


class UnknownOperation(QuerySyntaxError):
    def __init__(self, token: str, span: tuple[int, int]):
        super().__init__(f"unknown operation {token!r} at token {span[0]}", span)
        self.token = token


class IllegalSlot(QuerySyntaxError):
    def __init__(self, op: str, token: str, span: tuple[int, int]):
        super().__init__(f"illegal slot {token!r} for {op} at token {span[0]}", span)
        self.op = op
        self.token = token


class MissingInstanceFilter(QuerySyntaxError):
    def __init__(self, op: str, span: tuple[int, int] = (0, 0)):
        super().__init__(f"{op} requires an instance-selecting filter", span)
        self.op = op


class TrailingTokens(QuerySyntaxError):
    def __init__(self, tokens: tuple[str, ...], span: tuple[int, int]):
        super().__init__(f"unexpected trailing tokens {' '.join(tokens)!r}", span)
        self.tokens = tokens


class IncompleteQuery(QuerySyntaxError):
    pass


class InvalidAst(CoxqlError, ValueError):
    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class BackendFailure(CoxqlError):
    """A generation backend failed or returned something unusable."""


class NoDefault(CoxqlError, ValueError):
    def __init__(self, op: str, position: str):
        super().__init__(f"{op} has no default for slot {position!r}")
        self.op = op
        self.position = position


# --------------------------------------------------------------------------
# tokenizing and parsing


def tokenize(text: str) -> list[str]:
    """Lower-case, split on whitespace, resolve aliases and multi-word methods."""
    raw = text.lower().split()
    out: list[str] = []
    i = 0
    while i < len(raw):
        for phrase, repl in _PHRASE_ALIASES:
            if tuple(raw[i:i + len(phrase)]) == phrase:
                out.append(repl)
                i += len(phrase)
                break
        else:
            out.append(TOKEN_ALIASES.get(raw[i], raw[i]))
            i += 1
    return out


class _Cursor:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Optional[str]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self) -> Optional[str]:
        tok = self.peek()
        self.i += 1
        return tok

    def span(self, start: Optional[int] = None) -> tuple[int, int]:
        start = self.i if start is None else start
        return (start, max(self.i, start + 1))


def _take_int(cur: _Cursor, op: str, lo: int) -> int:
    start = cur.i
    tok = cur.take()
    if tok is None or not _INT_RE.fullmatch(tok) or int(tok) < lo:
        raise IllegalSlot(op, tok or "<end>", (start, start + 1))
    return int(tok)


def _take_choice(cur: _Cursor, op: str, pool: tuple[str, ...]) -> str:
    start = cur.i
    tok = cur.take()
    if tok not in pool:
        raise IllegalSlot(op, tok or "<end>", (start, start + 1))
    return tok


def _take_word(cur: _Cursor, op: str) -> str:
    start = cur.i
    tok = cur.take()
    if tok is None or not is_word(tok):
        raise IllegalSlot(op, tok or "<end>", (start, start + 1))
    return tok


def _parse_filter(cur: _Cursor) -> FilterClause:
    head = cur.take()
    kind = OperationKind(head)
    if kind is _K.FILTER:
        start = cur.i
        if cur.take() != "id":
            raise IllegalSlot("filter", cur.tokens[start] if start < len(cur.tokens) else "<end>",
                              (start, start + 1))
        return FilterClause(kind, Id(_take_int(cur, "filter", 0)))
    if kind in (_K.PREDFILTER, _K.LABELFILTER):
        return FilterClause(kind, Label(_take_word(cur, head)))
    if kind is _K.INCLUDES:
        return FilterClause(kind, Token(_take_word(cur, head)))
    if kind is _K.LENGTHFILTER:
        level = _take_choice(cur, head, LENGTH_LEVELS)
        comparator = _take_choice(cur, head, COMPARATORS)
        return FilterClause(kind, LengthSpec(level, comparator, _take_int(cur, head, 1)))
    return FilterClause(kind)


def parse_query(text: str) -> QueryAst:
    """Parse a query string into a QueryAst.

    Slot order and arity are not enforced here (``validate`` reports them);
    unknown tokens, illegal slot words and a missing instance filter are.
    """
    tokens = tokenize(text)
    if not tokens:
        raise EmptyQuery("empty query")
    cur = _Cursor(tokens)
    filters: list[tuple[FilterClause, str]] = []
    filter_names = {k.value for k in FILTER_KINDS}
    while cur.peek() in filter_names:
        clause = _parse_filter(cur)
        conn = cur.peek()
        if conn is None:
            raise IncompleteQuery("filter chain without a terminal operation", cur.span())
        if conn not in CONNECTIVES:
            raise TrailingTokens(tuple(tokens[cur.i:]), (cur.i, len(tokens)))
        cur.take()
        filters.append((clause, conn))

    start = cur.i
    head = cur.take()
    if head is None:
        raise IncompleteQuery("filter chain without a terminal operation", (start, start + 1))
    try:
        terminal = OperationKind(head)
    except ValueError:
        raise UnknownOperation(head, (start, start + 1)) from None
    if not terminal.is_terminal:
        raise UnknownOperation(head, (start, start + 1))
    spec = REGISTRY[terminal]

    slots: list = []
    while cur.peek() is not None:
        start = cur.i
        tok = cur.peek()
        variant = _SLOT_VOCAB.get(tok)
        if variant is None:
            raise TrailingTokens(tuple(tokens[start:]), (start, len(tokens)))
        if not any(variant in p.variants for p in spec.slots):
            raise IllegalSlot(terminal.value, tok, (start, start + 1))
        cur.take()
        if variant is TopK:
            slots.append(TopK(_take_int(cur, terminal.value, 1)))
        elif variant is All:
            slots.append(ALL)
        else:
            slots.append(variant(tok))

    # shortened attribution form: "nlpattribute default" -> "nlpattribute all default"
    if terminal is _K.NLPATTRIBUTE and len(slots) == 1 and isinstance(slots[0], AttributionMethod):
        slots.insert(0, ALL)

    if spec.requires_instance_filter and not filters:
        raise MissingInstanceFilter(terminal.value, (start, start + 1))
    return QueryAst(terminal=terminal, slots=tuple(slots), filters=tuple(filters))


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    op: str
    detail: str = ""

    def __str__(self):
        return f"{self.kind}({self.op}{', ' + self.detail if self.detail else ''})"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


def validate(query: QueryAst) -> ValidationReport:
    v: list[Violation] = []
    term = query.terminal
    if not isinstance(term, OperationKind) or not term.is_terminal:
        return ValidationReport((Violation("NotTerminal", str(getattr(term, "value", term))),))
    spec = REGISTRY[term]
    op = term.value

    for idx, (clause, conn) in enumerate(query.filters):
        if clause.kind not in FILTER_KINDS or not isinstance(clause.arg, _FILTER_ARG[clause.kind]):
            v.append(Violation("IllegalFilter", op, f"clause {idx}"))
        if conn not in CONNECTIVES:
            v.append(Violation("IllegalConnective", op, repr(conn)))
    if query.filters:
        if query.filters[-1][1] != "and":
            v.append(Violation("IllegalConnective", op, "terminal must follow 'and'"))
        if not spec.accepts_filters:
            v.append(Violation("IllegalFilter", op, "operation takes no filters"))
    elif spec.requires_instance_filter:
        v.append(Violation("MissingInstanceFilter", op))

    positions = []
    for slot in query.slots:
        pos = spec.position_of(slot)
        if pos is None:
            v.append(Violation("IllegalSlot", op, " ".join(slot.tokens())))
        else:
            positions.append(pos)
    if len(query.slots) > len(spec.slots):
        v.append(Violation("SlotArity", op, f"max {len(spec.slots)}"))
    elif len(set(positions)) < len(positions):
        v.append(Violation("SlotArity", op, "repeated slot position"))
    elif positions != sorted(positions):
        v.append(Violation("SlotOrder", op))
    for i, pos in enumerate(spec.slots):
        if i not in positions:
            v.append(Violation("MissingSlot", op, pos.name))
    return ValidationReport(tuple(v))


def default_fill(query: QueryAst) -> QueryAst:
    """Fill every unset slot position with its schema default.

    Slots are assigned to positions by variant (first occurrence wins) and
    emitted in canonical order.
    """
    spec = REGISTRY[query.terminal]
    assigned: dict[int, SlotValue] = {}
    for slot in query.slots:
        pos = spec.position_of(slot)
        if pos is not None and pos not in assigned:
            assigned[pos] = slot
    slots = []
    for i, pos in enumerate(spec.slots):
        if i in assigned:
            slots.append(assigned[i])
        elif pos.default is not None:
            slots.append(pos.default)
        else:
            raise NoDefault(query.terminal.value, pos.name)
    return QueryAst(terminal=query.terminal, slots=tuple(slots), filters=query.filters)


def canonicalize(query: QueryAst) -> str:
    report = validate(query)
    if not report.ok:
        raise InvalidAst(report.violations)
    return " ".join(query.tokens())


def normalize(text: str) -> str:
    """Canonical form when ``text`` is a valid query, else the token-normalized text."""
    try:
        return canonicalize(parse_query(text))
    except (QuerySyntaxError, InvalidAst):
        return " ".join(tokenize(text))


def is_valid(text: str) -> bool:
    try:
        return validate(parse_query(text)).ok
    except QuerySyntaxError:
        return False


def terminal_of(text: str) -> Optional[OperationKind]:
    """Terminal operation of ``text`` if it parses, else None."""
    try:
        return parse_query(text).terminal
    except QuerySyntaxError:
        return None
