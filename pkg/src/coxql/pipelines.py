"""Intent-recognition strategies: NN, GD, MP and MP+ (MP with template checking).

Every strategy maps a question to a :class:`Prediction`. MP+ runs the
deterministic repair pass :func:`template_check`, which uses the grammar and
the user question to fix slot vocabulary, order, defaults, ids and top-k
values in the raw multi-prompt output.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .dataset import Dataset
from .grammar import Grammar, build_grammar, constrained_decode
from .qlcore import (
    ALL, All, AttributionMethod, CoxqlError, FilterClause, Id, Metric,
    MistakeMode, NoDefault, OperationKind, QueryAst, QuerySyntaxError, REGISTRY, TopK,
    TutorialTopic, canonicalize, default_fill, is_valid, parse_query, spec_for, tokenize,
    validate,
)
from .retrieval import DEFAULT_SHOTS, nn_parse, select_demonstrations

STRATEGIES = ("nn", "gd", "mp", "mp+")
PROMPT_VERSION = "v1"
_K = OperationKind


class StageOneUnknownOperation(CoxqlError):
    def __init__(self, output: str):
        super().__init__(f"no known operation in stage-1 output {output!r}")
        self.output = output


class Unrepairable(CoxqlError):
    def __init__(self, reason: str, trace: Optional["RepairTrace"] = None):
        super().__init__(reason)
        self.reason = reason
        self.trace = trace


# --------------------------------------------------------------------------
# prompts


def _format_demos(pairs, answer_marker: str = "Parse:") -> str:
    return "".join(f"Question: {q}\n{answer_marker} {a}\n\n" for q, a in pairs)


def _fill(template: str, **values: str) -> str:
    out = template
    for key, val in values.items():
        out = out.replace("{" + key + "}", val)
    return out


@dataclass(frozen=True)
class PromptBundle:
    coarse_template: str
    fine_template: str
    gd_template: str
    coarse_demos: tuple[tuple[str, str], ...]
    fine_demos: dict = field(hash=False)
    version: str = PROMPT_VERSION

    def __post_init__(self):
        covered = {op for _, op in self.coarse_demos}
        missing = [k.value for k in REGISTRY if k.value not in covered]
        if missing:
            raise ValueError(f"coarse prompt lacks demonstrations for {missing}")
        no_fine = [k.value for k in REGISTRY if not self.fine_demos.get(k.value)]
        if no_fine:
            raise ValueError(f"no fine-grained demonstrations for {no_fine}")

    @classmethod
    def load(cls, directory=None) -> "PromptBundle":
        """Read templates and demonstrations from ``directory`` (default: bundled set)."""
        if directory is None:
            directory = Path(str(resources.files("coxql") / "prompts" / PROMPT_VERSION))
        directory = Path(directory)
        demos = json.loads((directory / "demonstrations.json").read_text(encoding="utf-8"))
        return cls(
            coarse_template=(directory / "coarse.txt").read_text(encoding="utf-8"),
            fine_template=(directory / "fine.txt").read_text(encoding="utf-8"),
            gd_template=(directory / "gd.txt").read_text(encoding="utf-8"),
            coarse_demos=tuple((d["question"], d["operation"]) for d in demos["coarse"]),
            fine_demos={op: tuple(map(tuple, rows)) for op, rows in demos["fine"].items()},
            version=directory.name,
        )

    def coarse_prompt(self, question: str) -> str:
        return _fill(self.coarse_template, demonstrations=_format_demos(self.coarse_demos, "Operation:"),
                     question=question)

    def fine_prompt(self, operation: str, question: str) -> str:
        return _fill(self.fine_template, operation=operation,
                     demonstrations=_format_demos(self.fine_demos[operation]), question=question)

    def gd_prompt(self, question: str, demonstrations) -> str:
        pairs = [(ex.question, ex.gold_parse) for ex in demonstrations]
        return _fill(self.gd_template, demonstrations=_format_demos(pairs), question=question)


_BUNDLE: Optional[PromptBundle] = None


def default_prompts() -> PromptBundle:
    global _BUNDLE
    if _BUNDLE is None:
        _BUNDLE = PromptBundle.load()
    return _BUNDLE


# --------------------------------------------------------------------------
# predictions


@dataclass(frozen=True)
class Prediction:
    text: str
    valid: bool
    error: str = ""
    trace: Optional["RepairTrace"] = None


def _prediction(text: str) -> Prediction:
    return Prediction(text, is_valid(text))


# --------------------------------------------------------------------------
# NN and GD


def gd_parse(question: str, backend, grammar: Optional[Grammar] = None, train: Optional[Dataset] = None,
             k: int = DEFAULT_SHOTS, prompts: Optional[PromptBundle] = None, embedder=None) -> Prediction:
    """Guided decoding over a prompt of ``k`` retrieved demonstrations.

    Backends without terminal scoring fall back to free completion; an
    unparseable completion comes back as an invalid prediction.
    """
    prompts = prompts or default_prompts()
    demos = select_demonstrations(question, train, k, embedder) if train is not None and len(train) else []
    prompt = prompts.gd_prompt(question, demos)
    if getattr(backend, "can_score", False):
        text = constrained_decode(backend, grammar or default_grammar(), prompt)
        return _prediction(text)
    return _prediction(backend.complete(prompt, stop=["\n"]).strip())


_GRAMMAR: Optional[Grammar] = None


def default_grammar() -> Grammar:
    global _GRAMMAR
    if _GRAMMAR is None:
        _GRAMMAR = build_grammar(REGISTRY)
    return _GRAMMAR


# --------------------------------------------------------------------------
# MP


_PUNCT_RE = re.compile(r"[^\w\s'\-]")
_EXTRA_ALIASES = {
    "tutorial": "qatutorial",
    "attribute": "nlpattribute",
    "attribution": "nlpattribute",
    "counterfactual": "cfe",
}
_TERMINAL_NAMES = {k.value for k in REGISTRY}
_FILTER_NAMES = {"filter", "predfilter", "labelfilter", "lengthfilter", "previousfilter", "includes"}


def _clean_tokens(text: str) -> list[str]:
    return [_EXTRA_ALIASES.get(t, t) for t in tokenize(_PUNCT_RE.sub(" ", text))]


def extract_operation(output: str) -> str:
    """First token naming a terminal operation."""
    for tok in _clean_tokens(output):
        if tok in _TERMINAL_NAMES:
            return tok
    raise StageOneUnknownOperation(output)


def mp_parse(question: str, backend, prompts: Optional[PromptBundle] = None) -> str:
    """Two-stage prompting; the stage-2 text is returned verbatim."""
    prompts = prompts or default_prompts()
    stage1 = backend.complete(prompts.coarse_prompt(question), stop=["\n"])
    op = extract_operation(stage1)
    return backend.complete(prompts.fine_prompt(op, question), stop=["\n"]).strip()


# --------------------------------------------------------------------------
# template checking


@dataclass(frozen=True)
class RepairFlags:
    topk_from_question: bool = True
    inject_id: bool = True
    ground_method: bool = True
    infer_slots: bool = True


@dataclass(frozen=True)
class RepairStep:
    name: str
    output: str


@dataclass(frozen=True)
class RepairTrace:
    raw: str
    steps: tuple[RepairStep, ...]
    final: Optional[str]
    reason: str = ""

    @property
    def step_names(self) -> list[str]:
        return [s.name for s in self.steps]

    @property
    def substantive(self) -> list[str]:
        return [s.name for s in self.steps if s.name != "validate"]


class _Numberless:
    """A ``topk`` keyword whose number is missing."""

    def tokens(self):
        return ("topk",)


NUMBERLESS = _Numberless()

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6, "seven": 7,
    "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12, "fifteen": 15, "twenty": 20,
}
_NUM = r"(\d+|" + "|".join(_NUMBER_WORDS) + r")"
_ID_RE = re.compile(r"\b(?:id|instance|data\s+point)(?:\s+number)?\s*#?\s*(\d+)\b", re.I)
_TOPK_RES = (
    re.compile(r"\btop[\s\-]*k?\s*" + _NUM + r"\b", re.I),
    re.compile(r"\b" + _NUM + r"\s+(?:most|best|top|highest)\b", re.I),
)
_SUPERLATIVE_RE = re.compile(r"\b(?:most|single)\b", re.I)
_METHOD_CUES = (
    (re.compile(r"\bintegrated[\s_\-]*gradients?\b", re.I), "integrated_gradient"),
    (re.compile(r"\binput[\s_\-]*(?:x|\*|times)?[\s_\-]*gradients?\b", re.I), "input_x_gradient"),
    (re.compile(r"\blime\b", re.I), "lime"),
    (re.compile(r"\battention\b", re.I), "attention"),
)
_METRIC_CUES = (
    (re.compile(r"\bprecision\b", re.I), "precision"),
    (re.compile(r"\brecall\b", re.I), "recall"),
    (re.compile(r"\bf1\b|\bf-1\b|\bf score\b", re.I), "f1"),
    (re.compile(r"\broc\b|\bauc\b", re.I), "roc"),
    (re.compile(r"\baccuracy\b", re.I), "accuracy"),
)
_MODE_CUES = (
    (re.compile(r"\bhow\s+(?:many|much)\b|\bamount\b|\bnumber\s+of\b|\bcount\b|\btotal\b", re.I), "count"),
    (re.compile(r"\bshow\b|\bwhich\b|\blist\b|\bexamples?\b|\bsome\b|\bsamples?\b|\bdisplay\b", re.I), "sample"),
)
_TOPIC_CUES = (
    (re.compile(r"\battribut", re.I), "qaattribute"),
    (re.compile(r"\brationali[sz]", re.I), "qarationalize"),
    (re.compile(r"\binfluen", re.I), "qainfluence"),
    (re.compile(r"\bcounterfactual|\bcfe\b", re.I), "qacfe"),
    (re.compile(r"\badversar", re.I), "qaadversarial"),
    (re.compile(r"\baugment", re.I), "qaaugment"),
    (re.compile(r"\bedit", re.I), "qaeditlabel"),
    (re.compile(r"\bunlearn", re.I), "qaunlearn"),
    (re.compile(r"\blearn|\btrain", re.I), "qalearn"),
)


def question_ids(question: str) -> list[int]:
    return [int(m) for m in _ID_RE.findall(question)]


def question_topk(question: str) -> Optional[int]:
    for rx in _TOPK_RES:
        m = rx.search(question)
        if m:
            val = m.group(1).lower()
            n = _NUMBER_WORDS.get(val) or int(val)
            if n >= 1:
                return n
    return None


def _first_cue(question: str, cues) -> Optional[str]:
    for rx, name in cues:
        if rx.search(question):
            return name
    return None


@dataclass
class _Work:
    filters: list
    op: OperationKind
    slots: list  # (position, value) in current order

    def render(self) -> str:
        out = []
        for clause, conn in self.filters:
            out.extend(clause.tokens())
            out.append(conn)
        out.append(self.op.value)
        for _, val in self.slots:
            out.extend(val.tokens())
        return " ".join(out)

    def get(self, pos: int):
        for p, v in self.slots:
            if p == pos:
                return v
        return None

    def put(self, pos: int, value) -> None:
        for i, (p, _) in enumerate(self.slots):
            if p == pos:
                self.slots[i] = (pos, value)
                return
        self.slots.append((pos, value))


def _parse_clause(chunk: list[str]) -> Optional[FilterClause]:
    if chunk and chunk[0] == "id":
        chunk = ["filter"] + chunk
    if not chunk or chunk[0] not in _FILTER_NAMES:
        return None
    try:
        query = parse_query(" ".join(chunk) + " and countdata")
    except QuerySyntaxError:
        return None
    return query.filters[0][0] if len(query.filters) == 1 else None


def _lenient_filters(tokens: list[str]) -> list:
    chunks, conns, cur = [], [], []
    for tok in tokens:
        if tok in ("and", "or"):
            chunks.append(cur)
            conns.append(tok)
            cur = []
        else:
            cur.append(tok)
    if cur:
        chunks.append(cur)
        conns.append("and")
    out = []
    for chunk, conn in zip(chunks, conns):
        clause = _parse_clause(chunk)
        if clause is not None:
            out.append((clause, conn))
    if out:
        out[-1] = (out[-1][0], "and")
    return out


def _slot_value(tok: str):
    """Slot object for a single slot word, or None."""
    if tok == "all":
        return ALL
    for cls in (MistakeMode, Metric, AttributionMethod, TutorialTopic):
        try:
            return cls(tok)
        except ValueError:
            continue
    return None


def _lenient_slots(op: OperationKind, tokens: list[str]) -> list:
    """(position, value) pairs; illegal and repeated positions dropped."""
    spec = spec_for(op)
    topk_pos = next((i for i, p in enumerate(spec.slots) if TopK in p.variants), None)
    out, seen = [], set()
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        i += 1
        if tok == "topk":
            value = NUMBERLESS
            if i < len(tokens) and tokens[i].isdigit() and int(tokens[i]) >= 1:
                value = TopK(int(tokens[i]))
                i += 1
            pos = topk_pos
        else:
            value = _slot_value(tok)
            pos = spec.position_of(value) if value is not None else None
        if pos is None or pos in seen:
            continue
        seen.add(pos)
        out.append((pos, value))
    return out


def template_check(raw: str, question: str, flags: Optional[RepairFlags] = None) -> RepairTrace:
    """Grammar- and question-aware repair of a raw parse.

    Raises Unrepairable (carrying the partial trace) when no terminal
    operation can be identified or the repaired query still fails validation.
    """
    flags = flags or RepairFlags()
    steps: list[RepairStep] = []
    last = " ".join(raw.lower().split())

    def record(name: str, text: str) -> None:
        nonlocal last
        if text != last:
            steps.append(RepairStep(name, text))
            last = text

    if not raw.strip():
        raise Unrepairable("empty model output", RepairTrace(raw, (), None, "empty model output"))
    tokens = _clean_tokens(raw)
    record("alias-normalize", " ".join(tokens))

    idx = next((i for i, t in enumerate(tokens) if t in _TERMINAL_NAMES), None)
    if idx is None:
        reason = "no terminal operation identifiable"
        raise Unrepairable(reason, RepairTrace(raw, tuple(steps), None, reason))
    op = _K(tokens[idx])
    spec = spec_for(op)

    filters = _lenient_filters(tokens[:idx]) if spec.accepts_filters else []
    work = _Work(filters, op, [])
    chain_text = " ".join(t for c, conn in filters for t in c.tokens() + (conn,))
    prefix_text = " ".join(tokens[:idx])
    if chain_text != prefix_text:
        record("filter-prune", " ".join(x for x in (chain_text, op.value, " ".join(tokens[idx + 1:])) if x))

    work.slots = _lenient_slots(op, tokens[idx + 1:])
    record("slot-prune", work.render())
    work.slots.sort(key=lambda pv: pv[0])
    record("reorder", work.render())

    if flags.inject_id and spec.requires_instance_filter:
        _repair_ids(work, question)
        record("id-inject", work.render())

    _repair_topk(work, question, flags)
    record("topk-inject", work.render())

    if flags.ground_method:
        _ground_method(work, question)
        record("method-ground", work.render())

    if flags.infer_slots:
        _infer_slots(work, question)
        record("slot-infer", work.render())

    query = QueryAst(op, tuple(v for _, v in work.slots), tuple(work.filters))
    try:
        query = default_fill(query)
    except NoDefault as exc:
        reason = str(exc)
        raise Unrepairable(reason, RepairTrace(raw, tuple(steps), None, reason)) from None
    record("default-fill", " ".join(query.tokens()))

    report = validate(query)
    if not report.ok:
        reason = "; ".join(map(str, report.violations))
        raise Unrepairable(reason, RepairTrace(raw, tuple(steps), None, reason))
    final = canonicalize(query)
    steps.append(RepairStep("validate", final))
    return RepairTrace(raw, tuple(steps), final)


def _repair_ids(work: _Work, question: str) -> None:
    ids = question_ids(question)
    if not ids:
        return
    id_clauses = [i for i, (c, _) in enumerate(work.filters) if c.kind is _K.FILTER]
    if not work.filters:
        work.filters = [(FilterClause(_K.FILTER, Id(ids[0])), "and")]
    elif id_clauses and len(set(ids)) == 1:
        present = {work.filters[i][0].arg.value for i in id_clauses}
        if ids[0] not in present:
            i = id_clauses[0]
            work.filters[i] = (FilterClause(_K.FILTER, Id(ids[0])), work.filters[i][1])


def _repair_topk(work: _Work, question: str, flags: RepairFlags) -> None:
    spec = spec_for(work.op)
    pos = next((i for i, p in enumerate(spec.slots) if TopK in p.variants), None)
    if pos is None:
        return
    cur = work.get(pos)
    fallback = ALL if All in spec.slots[pos].variants else TopK(1)
    if not flags.topk_from_question:
        if cur is NUMBERLESS:
            work.put(pos, fallback)
        return
    n = question_topk(question)
    if n is not None and (cur is None or cur is NUMBERLESS or isinstance(cur, All)):
        work.put(pos, TopK(n))
    elif cur is NUMBERLESS:
        work.put(pos, TopK(1) if _SUPERLATIVE_RE.search(question) else fallback)
    work.slots.sort(key=lambda pv: pv[0])


def _ground_method(work: _Work, question: str) -> None:
    if work.op is not _K.NLPATTRIBUTE:
        return
    pos = next(i for i, p in enumerate(spec_for(work.op).slots) if AttributionMethod in p.variants)
    cue = _first_cue(question, _METHOD_CUES)
    cur = work.get(pos)
    if cue is not None:
        work.put(pos, AttributionMethod(cue))
    elif cur is not None and cur.name != "default":
        work.put(pos, AttributionMethod("default"))
    work.slots.sort(key=lambda pv: pv[0])


def _infer_slots(work: _Work, question: str) -> None:
    spec = spec_for(work.op)
    for i, p in enumerate(spec.slots):
        if work.get(i) is not None:
            continue
        if MistakeMode in p.variants:
            cue = _first_cue(question, _MODE_CUES)
            if cue:
                work.put(i, MistakeMode(cue))
        elif TutorialTopic in p.variants:
            cue = _first_cue(question, _TOPIC_CUES)
            if cue:
                work.put(i, TutorialTopic(cue))
        elif Metric in p.variants:
            cue = _first_cue(question, _METRIC_CUES)
            if cue:
                work.put(i, Metric(cue))
    work.slots.sort(key=lambda pv: pv[0])


def mp_plus_parse(question: str, backend, prompts: Optional[PromptBundle] = None,
                  flags: Optional[RepairFlags] = None) -> Prediction:
    raw = mp_parse(question, backend, prompts)
    try:
        trace = template_check(raw, question, flags)
    except Unrepairable as exc:
        return Prediction(raw, False, exc.reason, exc.trace)
    return Prediction(trace.final, True, trace=trace)


# --------------------------------------------------------------------------
# strategy dispatch


def make_strategy(name: str, backend=None, train: Optional[Dataset] = None, *,
                  prompts: Optional[PromptBundle] = None, flags: Optional[RepairFlags] = None,
                  grammar: Optional[Grammar] = None, k: int = DEFAULT_SHOTS,
                  embedder=None) -> Callable[[str], Prediction]:
    """A question -> Prediction callable for one of :data:`STRATEGIES`."""
    if name == "nn":
        if train is None or not len(train):
            raise ValueError("nn needs a training corpus")
        return lambda q: _prediction(nn_parse(q, train, embedder))
    if backend is None:
        raise ValueError(f"strategy {name!r} needs a backend")
    if name == "gd":
        return lambda q: gd_parse(q, backend, grammar, train, k, prompts, embedder)
    if name == "mp":
        def run_mp(q):
            try:
                return _prediction(mp_parse(q, backend, prompts))
            except StageOneUnknownOperation as exc:
                return Prediction(exc.output, False, str(exc))
        return run_mp
    if name == "mp+":
        def run_mp_plus(q):
            try:
                return mp_plus_parse(q, backend, prompts, flags)
            except StageOneUnknownOperation as exc:
                return Prediction(exc.output, False, str(exc))
        return run_mp_plus
    raise ValueError(f"unknown strategy {name!r}; expected one of {STRATEGIES}")


def flags_from_config(parser) -> RepairFlags:
    if parser is None or not parser.has_section("repair"):
        return RepairFlags()
    sec = parser["repair"]
    return RepairFlags(
        topk_from_question=sec.getboolean("topk_from_question", True),
        inject_id=sec.getboolean("inject_id", True),
        ground_method=sec.getboolean("ground_method", True),
        infer_slots=sec.getboolean("infer_slots", True),
    )
