"""Scoring and reporting: exact-match accuracy, per-category F1, token diffs.

Category F1 gives credit for the right category even when slots are wrong;
invalid predictions fall into a reserved ``invalid`` label, which counts as a
miss for the gold category.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .dataset import Dataset
from .lmbackend import (
    CORRUPTION_CLASSES, CorruptingBackend, CorruptionProfile, OracleBackend, applicable,
)
from .pipelines import Prediction, RepairFlags, make_strategy
from .qlcore import BackendFailure, Category, CoxqlError, normalize, terminal_of

logger = logging.getLogger(__name__)

INVALID = "invalid"
CATEGORY_ORDER = tuple(c.value for c in Category)
F1_ASSUMPTION = "category-level F1: a prediction earns credit for its category even when slots differ"


class LengthMismatch(CoxqlError, ValueError):
    pass


# --------------------------------------------------------------------------
# metrics


def exact_match(pred: str, gold: str) -> bool:
    return normalize(pred) == normalize(gold)


def predicted_category(pred: str, valid: bool = True) -> str:
    if not valid:
        return INVALID
    op = terminal_of(pred)
    return op.category.value if op is not None else INVALID


@dataclass(frozen=True)
class CategoryScore:
    precision: float
    recall: float
    f1: float
    support: int = 0


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def category_f1(pred_labels: Sequence[str], gold_labels: Sequence[str]) -> dict[str, CategoryScore]:
    """One-vs-rest P/R/F1 per label; labels absent from both sides are omitted."""
    if len(pred_labels) != len(gold_labels):
        raise LengthMismatch(f"{len(pred_labels)} predictions vs {len(gold_labels)} golds")
    labels = set(pred_labels) | set(gold_labels)
    labels.discard(INVALID)
    out = {}
    for label in sorted(labels, key=lambda c: CATEGORY_ORDER.index(c) if c in CATEGORY_ORDER else 99):
        tp = sum(p == label and g == label for p, g in zip(pred_labels, gold_labels))
        fp = sum(p == label and g != label for p, g in zip(pred_labels, gold_labels))
        fn = sum(p != label and g == label for p, g in zip(pred_labels, gold_labels))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        out[label] = CategoryScore(prec, rec, _f1(prec, rec), tp + fn)
    return out


def per_category_f1(preds: Sequence[str], golds: Sequence[str],
                    valid: Optional[Sequence[bool]] = None) -> dict[str, CategoryScore]:
    if len(preds) != len(golds) or (valid is not None and len(valid) != len(preds)):
        raise LengthMismatch("predictions, golds and validity flags must align")
    valid = valid if valid is not None else [True] * len(preds)
    pred_labels = [predicted_category(p, v) for p, v in zip(preds, valid)]
    gold_labels = [predicted_category(g) for g in golds]
    return category_f1(pred_labels, gold_labels)


def diff_tokens(pred: str, gold: str) -> tuple[bool, ...]:
    """Mask over ``pred`` tokens that lie on a longest common subsequence with ``gold``."""
    a, b = pred.split(), gold.split()
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            table[i][j] = table[i + 1][j + 1] + 1 if a[i] == b[j] else max(table[i + 1][j], table[i][j + 1])
    mask = [False] * n
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            mask[i] = True
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return tuple(mask)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class InstanceDiff:
    question: str
    gold: str
    predicted: str
    mask: tuple[bool, ...]
    correct: bool
    valid: bool = True
    error: str = ""

    def render(self) -> str:
        toks = self.predicted.split()
        marked = " ".join(f"[{t}]" if hit else t for t, hit in zip(toks, self.mask))
        flag = "ok" if self.correct else "xx"
        return f"{flag} {self.question}\n   gold: {self.gold}\n   pred: {marked}"


@dataclass(frozen=True)
class EvalReport:
    strategy: str
    backend: str
    accuracy: float
    per_category: dict
    instance_diffs: tuple[InstanceDiff, ...] = ()
    dataset: str = ""
    assumptions: tuple[str, ...] = (F1_ASSUMPTION,)

    @property
    def n(self) -> int:
        return len(self.instance_diffs)

    @property
    def correct(self) -> int:
        return sum(d.correct for d in self.instance_diffs)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "backend": self.backend,
            "dataset": self.dataset,
            "accuracy": self.accuracy,
            "assumptions": list(self.assumptions),
            "per_category": {k: asdict(v) for k, v in self.per_category.items()},
            "instances": [
                {**asdict(d), "mask": list(d.mask)} for d in self.instance_diffs
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            strategy=data["strategy"],
            backend=data["backend"],
            dataset=data.get("dataset", ""),
            accuracy=data["accuracy"],
            assumptions=tuple(data.get("assumptions", ())),
            per_category={k: CategoryScore(**v) for k, v in data["per_category"].items()},
            instance_diffs=tuple(
                InstanceDiff(**{**d, "mask": tuple(d["mask"])}) for d in data["instances"]
            ),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    def render(self, show_errors: int = 10) -> str:
        lines = [
            f"# {F1_ASSUMPTION}",
            f"strategy: {self.strategy}   backend: {self.backend}   dataset: {self.dataset}",
            f"exact match: {100 * self.accuracy:.2f}%  ({self.correct}/{self.n})",
            "",
            f"{'category':<18} {'P':>7} {'R':>7} {'F1':>7} {'n':>5}",
        ]
        for cat, s in self.per_category.items():
            lines.append(f"{cat:<18} {100 * s.precision:7.2f} {100 * s.recall:7.2f} {100 * s.f1:7.2f} {s.support:5d}")
        wrong = [d for d in self.instance_diffs if not d.correct][:show_errors]
        if wrong:
            lines += ["", "errors ([token] = matches gold):"]
            lines += [d.render() for d in wrong]
        return "\n".join(lines)


def build_report(strategy: str, backend: str, questions: Sequence[str], golds: Sequence[str],
                 predictions: Sequence[Prediction], dataset: str = "") -> EvalReport:
    if not (len(questions) == len(golds) == len(predictions)):
        raise LengthMismatch("questions, golds and predictions must align")
    diffs = []
    for q, g, p in zip(questions, golds, predictions):
        correct = p.valid and exact_match(p.text, g)
        diffs.append(InstanceDiff(q, g, p.text, diff_tokens(p.text.lower(), g), correct, p.valid, p.error))
    accuracy = sum(d.correct for d in diffs) / len(diffs) if diffs else 0.0
    per_cat = per_category_f1([p.text for p in predictions], golds, [p.valid for p in predictions])
    return EvalReport(strategy, backend, accuracy, per_cat, tuple(diffs), dataset)


def predict_all(predict: Callable[[str], Prediction], questions: Sequence[str],
                max_concurrency: int = 0) -> list[Prediction]:
    """Run ``predict`` over ``questions``; backend failures become invalid predictions."""
    def one(q: str) -> Prediction:
        try:
            return predict(q)
        except BackendFailure as exc:
            logger.warning("backend failure on %r: %s", q, exc)
            return Prediction("", False, f"{type(exc).__name__}: {exc}")

    if max_concurrency and max_concurrency > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            return list(pool.map(one, questions))
    return [one(q) for q in questions]


def run_eval(strategy: str, test: Dataset, backend=None, train: Optional[Dataset] = None,
             flags: Optional[RepairFlags] = None, max_concurrency: Optional[int] = None,
             embedder=None) -> EvalReport:
    predict = make_strategy(strategy, backend, train, flags=flags, embedder=embedder)
    if max_concurrency is None:
        max_concurrency = getattr(backend, "max_concurrency", 0) or 0
    preds = predict_all(predict, test.questions, max_concurrency)
    name = getattr(backend, "name", type(backend).__name__) if backend is not None else "lexical-nn"
    return build_report(strategy, name, test.questions, [ex.gold_parse for ex in test], preds, test.source)


# --------------------------------------------------------------------------
# comparison tables


def accuracy_table(reports: Iterable[EvalReport]) -> list[dict]:
    """Rows keyed by backend, one exact-match column (in %) per strategy."""
    rows: dict[str, dict] = {}
    for r in reports:
        rows.setdefault(r.backend, {"model": r.backend})[r.strategy] = round(100 * r.accuracy, 2)
    return list(rows.values())


def category_table(reports: Iterable[EvalReport]) -> list[dict]:
    """Rows keyed by (backend, strategy), one F1 column (in %) per category."""
    out = []
    for r in reports:
        row = {"model": r.backend, "strategy": r.strategy}
        for cat in CATEGORY_ORDER:
            if cat in r.per_category:
                row[cat] = round(100 * r.per_category[cat].f1, 2)
        out.append(row)
    return out


def to_csv(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    if columns is None:
        columns = []
        for row in rows:
            columns += [k for k in row if k not in columns]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), restval="", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def render_rows(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    columns = []
    for row in rows:
        columns += [k for k in row if k not in columns]
    cells = [[str(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join([fmt.format(*columns)] + [fmt.format(*r) for r in cells])


# --------------------------------------------------------------------------
# corruption suite


@dataclass(frozen=True)
class SuiteRow:
    error_class: str
    affected: int
    mp_correct: int
    mp_plus_correct: int

    @property
    def restored(self) -> bool:
        return self.mp_plus_correct == self.affected

    @property
    def mp_below_full(self) -> bool:
        return self.affected == 0 or self.mp_correct < self.affected


@dataclass(frozen=True)
class DominanceRow:
    seed: int
    mp_accuracy: float
    mp_plus_accuracy: float

    @property
    def holds(self) -> bool:
        return self.mp_plus_accuracy >= self.mp_accuracy


@dataclass
class SuiteResult:
    rows: list[SuiteRow] = field(default_factory=list)
    dominance: list[DominanceRow] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.restored and r.mp_below_full for r in self.rows) and all(d.holds for d in self.dominance)

    def table(self) -> list[dict]:
        return [{"class": r.error_class, "affected": r.affected, "mp": r.mp_correct,
                 "mp+": r.mp_plus_correct, "restored": "yes" if r.restored else "no"} for r in self.rows]

    def dominance_table(self) -> list[dict]:
        return [{"seed": d.seed, "mp": round(100 * d.mp_accuracy, 2), "mp+": round(100 * d.mp_plus_accuracy, 2),
                 "holds": "yes" if d.holds else "no"} for d in self.dominance]


def _accuracy(predict, examples) -> tuple[int, float]:
    hits = sum(p.valid and exact_match(p.text, ex.gold_parse)
               for p, ex in zip(predict_all(predict, [ex.question for ex in examples]), examples))
    return hits, hits / len(examples) if examples else 0.0


def corrupt_suite(test: Dataset, classes: Sequence[str] = CORRUPTION_CLASSES, seeds: Sequence[int] = range(10),
                  mixed_rate: float = 0.5, flags: Optional[RepairFlags] = None, seed: int = 0) -> SuiteResult:
    """Per-class repair matrix plus MP+ vs MP dominance on seeded mixed profiles."""
    oracle = OracleBackend(test.mapping())
    result = SuiteResult()
    for name in classes:
        backend = CorruptingBackend(oracle, CorruptionProfile.only(name, 1.0, seed))
        affected = [ex for ex in test if applicable(name, ex.gold_parse)]
        mp, _ = _accuracy(make_strategy("mp", backend), affected)
        mpp, _ = _accuracy(make_strategy("mp+", backend, flags=flags), affected)
        result.rows.append(SuiteRow(name, len(affected), mp, mpp))
    for s in seeds:
        backend = CorruptingBackend(oracle, CorruptionProfile.uniform(mixed_rate, s))
        _, mp = _accuracy(make_strategy("mp", backend), list(test))
        _, mpp = _accuracy(make_strategy("mp+", backend, flags=flags), list(test))
        result.dominance.append(DominanceRow(s, mp, mpp))
    return result
