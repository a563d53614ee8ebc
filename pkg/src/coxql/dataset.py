"""Question/parse corpora: loading, statistics and record-format conversion.

Records are UTF-8 JSON lines with ``question`` and ``parse`` fields. Gold
parses are normalized through the query language on load; the raw strings
are kept in :attr:`Dataset.raw` for auditing.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .qlcore import (
    Category, CoxqlError, InvalidAst, OperationKind, QuerySyntaxError, canonicalize,
    parse_query,
)

SPLITS = ("train", "test")


class DataError(CoxqlError):
    pass


class IoFailure(DataError):
    pass


class EmptyDataset(DataError):
    pass


@dataclass(frozen=True)
class Example:
    question: str
    gold_parse: str
    split: str = "train"

    @property
    def intent(self) -> OperationKind:
        return parse_query(self.gold_parse).terminal

    @property
    def category(self) -> Category:
        return self.intent.category


@dataclass(frozen=True)
class Reject:
    line: int
    text: str
    reason: str


@dataclass(frozen=True)
class Dataset:
    examples: tuple[Example, ...]
    source: str = ""
    sha256: str = ""
    raw: tuple[str, ...] = ()
    rejects: tuple[Reject, ...] = ()

    def __len__(self):
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.examples == other.examples

    def __hash__(self):
        return hash(self.examples)

    @property
    def questions(self) -> list[str]:
        return [ex.question for ex in self.examples]

    def mapping(self) -> dict[str, str]:
        return {ex.question: ex.gold_parse for ex in self.examples}


def _normalize_gold(text: str) -> str:
    return canonicalize(parse_query(text))


def from_pairs(pairs: Iterable[tuple[str, str]], split: str = "train", source: str = "") -> Dataset:
    """Build a Dataset from (question, parse) pairs; bad parses become rejects."""
    examples, raw, rejects = [], [], []
    seen = set()
    for n, (question, parse) in enumerate(pairs, 1):
        question = " ".join(str(question).split())
        try:
            gold = _normalize_gold(parse)
        except (QuerySyntaxError, InvalidAst) as exc:
            rejects.append(Reject(n, parse, str(exc)))
            continue
        if (question, gold) in seen:
            rejects.append(Reject(n, parse, "duplicate pair"))
            continue
        seen.add((question, gold))
        examples.append(Example(question, gold, split))
        raw.append(parse)
    return Dataset(tuple(examples), source=source, raw=tuple(raw), rejects=tuple(rejects))


def _read_jsonl(text: str) -> Iterator[tuple[int, tuple[str, str]]]:
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            yield n, (rec["question"], rec["parse"])
        except (ValueError, KeyError, TypeError) as exc:
            yield n, exc


def load(path, split: str = "train") -> Dataset:
    """Load a JSON-lines (or ``.tsv``) corpus."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    text = data.decode("utf-8")
    if path.suffix == ".tsv":
        rows = list(_read_tsv(text))
    else:
        rows = list(_read_jsonl(text))
    pairs, bad = [], []
    for n, row in rows:
        if isinstance(row, Exception):
            bad.append(Reject(n, "", f"malformed record: {row}"))
        else:
            pairs.append(row)
    ds = from_pairs(pairs, split=split, source=str(path))
    rejects = tuple(bad) + ds.rejects
    if not ds.examples:
        raise EmptyDataset(f"{path} contains no usable examples")
    return Dataset(ds.examples, source=str(path), sha256=hashlib.sha256(data).hexdigest(),
                   raw=ds.raw, rejects=rejects)


def _read_tsv(text: str) -> Iterator[tuple[int, tuple[str, str]]]:
    for n, row in enumerate(csv.reader(text.splitlines(), delimiter="\t"), 1):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 2:
            yield n, ValueError(f"expected 2 columns, got {len(row)}")
        else:
            yield n, (row[0], row[1])


def dumps(ds: Dataset) -> str:
    return "".join(json.dumps({"question": ex.question, "parse": ex.gold_parse}) + "\n" for ex in ds)


def dump(ds: Dataset, path) -> None:
    Path(path).write_text(dumps(ds), encoding="utf-8")


def convert_tsv(src, dst) -> Dataset:
    """Convert a two-column TSV file into the JSON-lines record format."""
    if Path(src).suffix != ".tsv":
        raise DataError(f"{src} is not a .tsv file")
    ds = load(src)
    dump(ds, dst)
    return ds


def intent_distribution(ds: Dataset) -> dict[str, int]:
    if not len(ds):
        raise EmptyDataset("empty dataset")
    counts = Counter(ex.intent.value for ex in ds)
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def category_distribution(ds: Dataset) -> dict[str, int]:
    counts = Counter(ex.category.value for ex in ds)
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def statistics(ds: Dataset) -> dict:
    return {
        "source": ds.source,
        "sha256": ds.sha256,
        "examples": len(ds),
        "rejects": [{"line": r.line, "text": r.text, "reason": r.reason} for r in ds.rejects],
        "intents": intent_distribution(ds),
        "categories": category_distribution(ds),
    }


def render_statistics(stats: dict) -> str:
    lines = [f"source:   {stats['source']}", f"sha256:   {stats['sha256']}",
             f"examples: {stats['examples']}", f"rejects:  {len(stats['rejects'])}", "", "intent counts:"]
    width = max(map(len, stats["intents"]), default=0)
    for name, n in stats["intents"].items():
        lines.append(f"  {name:<{width}}  {n:>5}")
    lines += ["", "category counts:"]
    for name, n in stats["categories"].items():
        lines.append(f"  {name:<{width}}  {n:>5}")
    for r in stats["rejects"]:
        lines.append(f"  reject line {r['line']}: {r['reason']}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# bundled corpus


def _bundled(name: str) -> Path:
    return Path(str(resources.files("coxql") / "data" / name))


def bundled_split(split: str) -> Dataset:
    """The small hand-written sample corpus shipped with the package."""
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    return load(_bundled(f"sample_{split}.jsonl"), split=split)


def released_split(split: str, data_dir: Optional[str]) -> Optional[Dataset]:
    """The released corpus from ``data_dir`` (``train.jsonl``/``test.jsonl``, or .tsv), if present."""
    if not data_dir:
        return None
    for suffix in (".jsonl", ".tsv"):
        path = Path(data_dir) / f"{split}{suffix}"
        if path.exists():
            return load(path, split=split)
    return None
