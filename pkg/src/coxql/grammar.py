"""Production-rule grammar over canonical CoXQL and an incremental recognizer.

The recognizer is an Earley chart that is advanced one terminal at a time,
so that :func:`allowed_next` can report exactly which terminals keep the
consumed prefix inside the language. :func:`constrained_decode` uses it to
mask a next-terminal scorer.

Terminals are either quoted literals (``"topk"``) or one of the literal
classes ``NUMBER`` (integer >= 1), ``ID`` (integer >= 0) and ``WORD``
(a free-text label/token that is not a reserved word).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .qlcore import (
    ATTRIBUTION_METHODS, COMPARATORS, BackendFailure, LENGTH_LEVELS, METRICS,
    MISTAKE_MODES, REGISTRY, TUTORIAL_TOPICS, AttributionMethod, CoxqlError,
    MistakeMode, Metric, OperationKind, OperationSpec, TopK, TutorialTopic,
    is_word,
)

NUMBER = "NUMBER"
ID = "ID"
WORD = "WORD"
TERMINAL_CLASSES = (NUMBER, ID, WORD)
END = "<end>"
MAX_STEPS = 64

_INT_RE = re.compile(r"\d+")


class GrammarError(CoxqlError):
    pass


class DeadState(GrammarError):
    pass


class StepLimitExceeded(GrammarError):
    pass


def literal(tok: str) -> str:
    return f'"{tok}"'


def is_literal(sym: str) -> bool:
    return len(sym) >= 2 and sym[0] == '"' and sym[-1] == '"'


def unquote(sym: str) -> str:
    return sym[1:-1]


def matches(token: str, terminal: str) -> bool:
    """Does the concrete ``token`` belong to ``terminal`` (literal or class)?"""
    if is_literal(terminal):
        return token == unquote(terminal)
    if terminal == NUMBER:
        return bool(_INT_RE.fullmatch(token)) and int(token) >= 1
    if terminal == ID:
        return bool(_INT_RE.fullmatch(token))
    if terminal == WORD:
        return is_word(token)
    raise GrammarError(f"not a terminal: {terminal!r}")


@dataclass(frozen=True)
class Grammar:
    rules: Mapping[str, tuple[tuple[str, ...], ...]]
    start: str

    def __post_init__(self):
        object.__setattr__(self, "rules", {k: tuple(tuple(p) for p in v) for k, v in self.rules.items()})
        self.check()

    def __eq__(self, other):
        if not isinstance(other, Grammar):
            return NotImplemented
        return self.start == other.start and list(self.rules.items()) == list(other.rules.items())

    def __hash__(self):
        return hash((self.start, tuple(self.rules.items())))

    def is_nonterminal(self, sym: str) -> bool:
        return sym in self.rules

    @property
    def terminals(self) -> frozenset[str]:
        return frozenset(s for prods in self.rules.values() for p in prods for s in p
                         if not self.is_nonterminal(s))

    def check(self) -> None:
        if self.start not in self.rules:
            raise GrammarError(f"start symbol {self.start!r} has no rules")
        for lhs, prods in self.rules.items():
            if not prods:
                raise GrammarError(f"{lhs} has no productions")
            for prod in prods:
                for sym in prod:
                    if not (sym in self.rules or is_literal(sym) or sym in TERMINAL_CLASSES):
                        raise GrammarError(f"undefined symbol {sym!r} in rule {lhs}")
        seen = {self.start}
        todo = [self.start]
        while todo:
            for prod in self.rules[todo.pop()]:
                for sym in prod:
                    if sym in self.rules and sym not in seen:
                        seen.add(sym)
                        todo.append(sym)
        unreachable = set(self.rules) - seen
        if unreachable:
            raise GrammarError(f"unreachable non-terminals: {sorted(unreachable)}")

    def nullable(self) -> frozenset[str]:
        null: set[str] = set()
        changed = True
        while changed:
            changed = False
            for lhs, prods in self.rules.items():
                if lhs not in null and any(all(s in null for s in p) for p in prods):
                    null.add(lhs)
                    changed = True
        return frozenset(null)

    # plain-text format: one rule per line, "lhs := alt1 | alt2"

    def dumps(self) -> str:
        order = [self.start] + [k for k in self.rules if k != self.start]
        lines = []
        for lhs in order:
            alts = " | ".join(" ".join(p) if p else "''" for p in self.rules[lhs])
            lines.append(f"{lhs} := {alts}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Grammar":
        rules: dict[str, tuple[tuple[str, ...], ...]] = {}
        start = None
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            lhs, sep, body = line.partition(" := ")
            if not sep:
                raise GrammarError(f"line {n}: expected 'lhs := ...'")
            lhs = lhs.strip()
            if lhs in rules:
                raise GrammarError(f"line {n}: duplicate rule {lhs!r}")
            prods = []
            for alt in body.split(" | "):
                syms = alt.split()
                prods.append(() if syms == ["''"] else tuple(syms))
            rules[lhs] = tuple(prods)
            start = start or lhs
        if start is None:
            raise GrammarError("empty grammar")
        return cls(rules=rules, start=start)


def _slot_rule(pos_name: str, variants) -> tuple[tuple[str, ...], ...]:
    alts: list[tuple[str, ...]] = []
    for variant in variants:
        if variant is TopK:
            alts.append((literal("topk"), NUMBER))
        elif variant.__name__ == "All":
            alts.append((literal("all"),))
        elif variant is MistakeMode:
            alts.extend((literal(m),) for m in MISTAKE_MODES)
        elif variant is Metric:
            alts.extend((literal(m),) for m in METRICS)
        elif variant is AttributionMethod:
            alts.extend((literal(m),) for m in ATTRIBUTION_METHODS)
        elif variant is TutorialTopic:
            alts.extend((literal(t),) for t in TUTORIAL_TOPICS)
        else:
            raise GrammarError(f"no grammar for slot variant {variant.__name__}")
    return tuple(alts)


_FILTER_RULES: dict[str, tuple[tuple[str, ...], ...]] = {
    "filter_clause": (
        ("id_filter",), ("pred_filter",), ("label_filter",),
        ("length_filter",), ("previous_filter",), ("includes_filter",),
    ),
    "id_filter": ((literal("filter"), literal("id"), ID),),
    "pred_filter": ((literal("predfilter"), WORD),),
    "label_filter": ((literal("labelfilter"), WORD),),
    "length_filter": ((literal("lengthfilter"), "length_level", "comparator", NUMBER),),
    "length_level": tuple((literal(x),) for x in LENGTH_LEVELS),
    "comparator": tuple((literal(x),) for x in COMPARATORS),
    "previous_filter": ((literal("previousfilter"),),),
    "includes_filter": ((literal("includes"), WORD),),
}


def build_grammar(registry: Mapping[OperationKind, OperationSpec] = REGISTRY) -> Grammar:
    """Derive the query grammar from the operation registry."""
    standalone, filtered = [], []
    op_rules: dict[str, tuple[tuple[str, ...], ...]] = {}
    slot_rules: dict[str, tuple[tuple[str, ...], ...]] = {}
    for kind, spec in registry.items():
        nt = f"{kind.value}_op"
        body = [literal(kind.value)]
        for pos in spec.slots:
            slot_nt = f"{kind.value}_{pos.name}"
            slot_rules[slot_nt] = _slot_rule(pos.name, pos.variants)
            body.append(slot_nt)
        op_rules[nt] = (tuple(body),)
        if not spec.requires_instance_filter:
            standalone.append((nt,))
        if spec.accepts_filters:
            filtered.append((nt,))

    rules: dict[str, tuple[tuple[str, ...], ...]] = {
        "query": (("standalone_op",), ("filter_chain", literal("and"), "filtered_op")),
        "standalone_op": tuple(standalone),
        "filtered_op": tuple(filtered),
        "filter_chain": (("filter_clause",), ("filter_clause", "connective", "filter_chain")),
        "connective": ((literal("and"),), (literal("or"),)),
    }
    rules.update(_FILTER_RULES)
    rules.update(op_rules)
    rules.update(slot_rules)
    return Grammar(rules=rules, start="query")


# --------------------------------------------------------------------------
# incremental recognizer


@dataclass(frozen=True)
class _Item:
    lhs: str
    prod: tuple[str, ...]
    dot: int
    origin: int

    @property
    def next_symbol(self) -> Optional[str]:
        return self.prod[self.dot] if self.dot < len(self.prod) else None


_ROOT = "<root>"


@dataclass(frozen=True)
class GrammarState:
    """Recognizer continuation after consuming ``consumed``.

    ``chart`` holds one Earley item set per input position; states are
    immutable, :func:`step` returns a new one.
    """

    grammar: Grammar
    chart: tuple[frozenset, ...]
    consumed: tuple[str, ...] = ()

    def __repr__(self):
        return f"GrammarState(consumed={' '.join(self.consumed)!r})"


def _closure(grammar: Grammar, chart: list, pos: int, seed: Iterable[_Item], nullable) -> frozenset:
    items = set(seed)
    todo = list(items)
    while todo:
        item = todo.pop()
        sym = item.next_symbol
        new: list[_Item] = []
        if sym is None:
            # complete: advance every item at item.origin waiting on item.lhs
            source = items if item.origin == pos else chart[item.origin]
            for parent in list(source):
                if parent.next_symbol == item.lhs:
                    new.append(_Item(parent.lhs, parent.prod, parent.dot + 1, parent.origin))
        elif grammar.is_nonterminal(sym):
            for prod in grammar.rules[sym]:
                new.append(_Item(sym, prod, 0, pos))
            if sym in nullable:
                new.append(_Item(item.lhs, item.prod, item.dot + 1, item.origin))
        for n in new:
            if n not in items:
                items.add(n)
                todo.append(n)
    return frozenset(items)


def initial_state(grammar: Grammar) -> GrammarState:
    seed = [_Item(_ROOT, (grammar.start,), 0, 0)]
    first = _closure(grammar, [], 0, seed, grammar.nullable())
    return GrammarState(grammar=grammar, chart=(first,))


def allowed_next(state: GrammarState) -> frozenset[str]:
    """Terminals (quoted literals or class names) that extend the prefix."""
    g = state.grammar
    out = frozenset(item.next_symbol for item in state.chart[-1]
                    if item.next_symbol is not None and not g.is_nonterminal(item.next_symbol))
    if not out and not is_complete(state):
        raise DeadState(f"no continuation after {' '.join(state.consumed)!r}")
    return out


def is_complete(state: GrammarState) -> bool:
    return any(item.lhs == _ROOT and item.next_symbol is None for item in state.chart[-1])


def step(state: GrammarState, token: str) -> GrammarState:
    """Consume one concrete token; raises DeadState if it does not fit."""
    g = state.grammar
    pos = len(state.chart)
    seed = [_Item(it.lhs, it.prod, it.dot + 1, it.origin) for it in state.chart[-1]
            if it.next_symbol is not None and not g.is_nonterminal(it.next_symbol)
            and matches(token, it.next_symbol)]
    if not seed:
        raise DeadState(f"{token!r} cannot follow {' '.join(state.consumed)!r}")
    chart = list(state.chart)
    items = _closure(g, chart, pos, seed, g.nullable())
    return GrammarState(grammar=g, chart=state.chart + (items,), consumed=state.consumed + (token,))


def recognize(grammar: Grammar, tokens: Sequence[str]) -> bool:
    """True iff ``tokens`` is a complete sentence of ``grammar``."""
    state = initial_state(grammar)
    try:
        for tok in tokens:
            state = step(state, tok)
    except DeadState:
        return False
    return is_complete(state)


def accepts(grammar: Grammar, text: str) -> bool:
    return recognize(grammar, text.split())


# --------------------------------------------------------------------------
# constrained decoding


def constrained_decode(backend, grammar: Grammar, prompt: str, max_steps: int = MAX_STEPS) -> str:
    """Greedy grammar-masked decoding over terminals.

    ``backend.score_terminals(prompt, partial, candidates)`` returns a mapping
    candidate -> score; only candidates in ``allowed_next`` are considered
    (``END`` is offered once the prefix is a full sentence). For a class
    terminal the backend supplies the literal via
    ``backend.fill_literal(prompt, partial, terminal_class)``.
    """
    state = initial_state(grammar)
    for _ in range(max_steps + 1):
        allowed = set(allowed_next(state))
        if is_complete(state):
            allowed.add(END)
        if allowed == {END}:
            return " ".join(state.consumed)
        candidates = sorted(allowed)
        scores = backend.score_terminals(prompt, state.consumed, candidates)
        best = max(candidates, key=lambda c: (float(scores.get(c, float("-inf"))), -candidates.index(c)))
        if best == END:
            return " ".join(state.consumed)
        if len(state.consumed) >= max_steps:
            raise StepLimitExceeded(f"no complete parse within {max_steps} terminals")
        if is_literal(best):
            token = unquote(best)
        else:
            token = str(backend.fill_literal(prompt, state.consumed, best)).strip().lower()
            if not matches(token, best):
                raise BackendFailure(f"backend literal {token!r} is not a valid {best}")
        state = step(state, token)
    raise StepLimitExceeded(f"no complete parse within {max_steps} terminals")


class RandomScorer:
    """Scores every candidate uniformly at random; literals drawn at random too."""

    can_score = True
    labels = ("positive", "negative", "neutral", "spam", "ham")

    def __init__(self, rng):
        self.rng = rng

    def score_terminals(self, prompt, partial, candidates):
        return {c: self.rng.random() for c in candidates}

    def fill_literal(self, prompt, partial, terminal_class):
        if terminal_class == WORD:
            return self.rng.choice(self.labels)
        lo = 0 if terminal_class == ID else 1
        return str(self.rng.randint(lo, 9999))


def random_sentence(grammar: Grammar, rng, max_steps: int = MAX_STEPS) -> str:
    """One uniform random walk through the recognizer."""
    return constrained_decode(RandomScorer(rng), grammar, "", max_steps=max_steps)
