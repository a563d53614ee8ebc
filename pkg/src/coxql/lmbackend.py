"""Text-generation backends used by the GD/MP pipelines.

Three implementations share one small contract:

* ``complete(prompt, stop=None, max_tokens=64) -> str``
* ``score_terminals(prompt, partial, candidates) -> {candidate: score}`` and
  ``fill_literal(prompt, partial, terminal_class) -> str``, only when
  ``can_score`` is true (grammar-constrained decoding needs them)

:class:`HttpBackend` talks to an OpenAI-compatible completion endpoint,
:class:`OracleBackend` answers from a question -> parse mapping and
:class:`CorruptingBackend` wraps an oracle and injects the parse errors
LLMs were observed to make, so the repair stage can be tested against a
known gold.
"""

from __future__ import annotations

import configparser
import logging
import os
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import httpx

from .grammar import END, matches
from .qlcore import (
    ATTRIBUTION_METHODS, METRICS, BackendFailure, CoxqlError, OperationKind, normalize,
    parse_query, spec_for,
)

logger = logging.getLogger(__name__)

QUESTION_MARKER = "Question:"
ANSWER_MARKER = "Parse:"


class BackendTimeout(BackendFailure):
    pass


class HttpStatus(BackendFailure):
    def __init__(self, code: int, body: str = ""):
        super().__init__(f"HTTP {code}: {body[:200]}")
        self.code = code


class MalformedResponse(BackendFailure):
    pass


class UnmappedQuestion(BackendFailure):
    pass


class ConfigError(CoxqlError):
    pass


def question_from_prompt(prompt: str) -> str:
    """The question of the last ``Question: ...`` line in a prompt."""
    idx = prompt.rfind(QUESTION_MARKER)
    if idx < 0:
        return prompt.strip()
    line = prompt[idx + len(QUESTION_MARKER):].split("\n", 1)[0]
    return line.strip()


def _truncate(text: str, stop: Optional[Sequence[str]]) -> str:
    for s in stop or ():
        if s and s in text:
            text = text[:text.index(s)]
    return text.strip()


class Backend:
    can_score = False
    deterministic = True
    max_concurrency = 1
    name = "backend"

    def complete(self, prompt: str, stop: Optional[Sequence[str]] = None, max_tokens: int = 64) -> str:
        raise NotImplementedError

    def score_terminals(self, prompt: str, partial: Sequence[str], candidates: Sequence[str]) -> dict:
        raise BackendFailure(f"{self.name} cannot score terminals")

    def fill_literal(self, prompt: str, partial: Sequence[str], terminal_class: str) -> str:
        raise BackendFailure(f"{self.name} cannot score terminals")


# --------------------------------------------------------------------------
# HTTP


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 30.0
    max_concurrency: int = 4
    max_tokens: int = 64
    chat: bool = False

    @property
    def api_key(self) -> Optional[str]:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


class HttpBackend(Backend):
    """OpenAI-compatible ``/completions`` (or ``/chat/completions``) client, temperature 0."""

    def __init__(self, config: EndpointConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self.max_concurrency = max(1, config.max_concurrency)
        self.name = config.model or config.url
        self._client = client or httpx.Client(timeout=config.timeout)

    def complete(self, prompt, stop=None, max_tokens=None):
        return http_complete(self.config, prompt, stop=stop, max_tokens=max_tokens, client=self._client)

    def close(self):
        self._client.close()


def http_complete(config: EndpointConfig, prompt: str, stop: Optional[Sequence[str]] = None,
                  max_tokens: Optional[int] = None, client: Optional[httpx.Client] = None) -> str:
    body = {
        "model": config.model,
        "temperature": 0,
        "max_tokens": max_tokens or config.max_tokens,
    }
    if stop:
        body["stop"] = list(stop)
    if config.chat:
        body["messages"] = [{"role": "user", "content": prompt}]
    else:
        body["prompt"] = prompt
    headers = {}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    base = config.url.rstrip("/")
    suffix = "/chat/completions" if config.chat else "/completions"
    url = base if base.endswith(suffix) else base + suffix

    logger.debug("POST %s (%d prompt chars)", url, len(prompt))
    own = client is None
    client = client or httpx.Client(timeout=config.timeout)
    try:
        resp = client.post(url, json=body, headers=headers, timeout=config.timeout)
    except httpx.TimeoutException as exc:
        raise BackendTimeout(f"request to {url} timed out") from exc
    except httpx.HTTPError as exc:
        raise BackendFailure(f"request to {url} failed: {exc}") from exc
    finally:
        if own:
            client.close()
    if resp.status_code != 200:
        raise HttpStatus(resp.status_code, resp.text)
    try:
        choice = resp.json()["choices"][0]
        text = choice["message"]["content"] if config.chat else choice["text"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected response body: {resp.text[:200]}") from exc
    if not isinstance(text, str):
        raise MalformedResponse("completion text is not a string")
    return _truncate(text, stop)


# --------------------------------------------------------------------------
# oracle


class OracleBackend(Backend):
    """Answers every prompt with the gold parse of the question it embeds."""

    can_score = True
    max_concurrency = 0  # unlimited
    name = "oracle"

    def __init__(self, mapping: Mapping[str, str]):
        self.mapping = {q.strip(): normalize(p) for q, p in mapping.items()}

    def gold_for(self, prompt: str) -> str:
        question = question_from_prompt(prompt)
        try:
            return self.mapping[question]
        except KeyError:
            raise UnmappedQuestion(f"no mapping for question {question!r}") from None

    def complete(self, prompt, stop=None, max_tokens=64):
        return self.gold_for(prompt)

    def score_terminals(self, prompt, partial, candidates):
        gold = self.gold_for(prompt).split()
        i = len(partial)
        if list(partial) != gold[:i]:
            return {c: 0.0 for c in candidates}
        want = gold[i] if i < len(gold) else None
        scores = {}
        for c in candidates:
            if c == END:
                hit = want is None
            elif want is None:
                hit = False
            else:
                hit = matches(want, c)
            scores[c] = 1.0 if hit else 0.0
        return scores

    def fill_literal(self, prompt, partial, terminal_class):
        gold = self.gold_for(prompt).split()
        if len(partial) >= len(gold):
            raise BackendFailure("oracle has no literal past the end of the gold parse")
        return gold[len(partial)]


# --------------------------------------------------------------------------
# corruption


CORRUPTION_CLASSES = (
    "MissingId", "DefaultOmission", "WrongMethodName", "SlotOrderSwap", "MissingTopK", "ExtraMetric",
)


@dataclass(frozen=True)
class CorruptionProfile:
    rates: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name, rate in self.rates.items():
            if name not in CORRUPTION_CLASSES:
                raise ConfigError(f"unknown corruption class {name!r}")
            if not 0.0 <= float(rate) <= 1.0:
                raise ConfigError(f"rate for {name} must be in [0, 1], got {rate}")

    @property
    def error_classes(self) -> tuple[str, ...]:
        return tuple(c for c in CORRUPTION_CLASSES if self.rates.get(c, 0.0) > 0)

    @classmethod
    def only(cls, name: str, rate: float = 1.0, seed: int = 0) -> "CorruptionProfile":
        return cls(rates={name: rate}, seed=seed)

    @classmethod
    def uniform(cls, rate: float, seed: int = 0) -> "CorruptionProfile":
        return cls(rates={c: rate for c in CORRUPTION_CLASSES}, seed=seed)


@dataclass
class _Parts:
    filters: list  # list of (tokens, connective)
    op: str
    slots: list  # list of token lists


def _split(parse: str) -> _Parts:
    query = parse_query(parse)
    filters = [(list(c.tokens()), conn) for c, conn in query.filters]
    return _Parts(filters, query.terminal.value, [list(s.tokens()) for s in query.slots])


def _join(parts: _Parts) -> str:
    out: list[str] = []
    for tokens, conn in parts.filters:
        out.extend(tokens)
        out.append(conn)
    out.append(parts.op)
    for slot in parts.slots:
        out.extend(slot)
    return " ".join(out)


def _defaults(op: str) -> list[list[str]]:
    spec = spec_for(OperationKind(op))
    return [list(p.default.tokens()) for p in spec.slots if p.default is not None]


def _is_method(slot: list[str]) -> bool:
    return len(slot) == 1 and slot[0] in ATTRIBUTION_METHODS


def _is_metric(slot: list[str]) -> bool:
    return len(slot) == 1 and slot[0] in METRICS


def _apply(name: str, parts: _Parts, rng: random.Random) -> bool:
    """Apply one corruption in place; False when it does not apply."""
    if name == "MissingId":
        kept = [(t, c) for t, c in parts.filters if t[0] != "filter"]
        if len(kept) == len(parts.filters):
            return False
        parts.filters = kept
        return True
    if name == "DefaultOmission":
        defaults = _defaults(parts.op)
        kept = [s for s in parts.slots if s not in defaults]
        if len(kept) == len(parts.slots):
            return False
        parts.slots = kept
        return True
    if name == "WrongMethodName":
        for i, slot in enumerate(parts.slots):
            if _is_method(slot):
                others = [m for m in ATTRIBUTION_METHODS if m != slot[0]]
                parts.slots[i] = [rng.choice(others)]
                return True
        return False
    if name == "SlotOrderSwap":
        if len(parts.slots) < 2:
            return False
        parts.slots = parts.slots[::-1]
        return True
    if name == "MissingTopK":
        for i, slot in enumerate(parts.slots):
            if slot and slot[0] == "topk" and len(slot) == 2:
                parts.slots[i] = ["topk"]
                return True
        return False
    if name == "ExtraMetric":
        metric = next((s for s in parts.slots if _is_metric(s)), None)
        if metric is None:
            return False
        parts.slots.append([rng.choice([m for m in METRICS if m != metric[0]])])
        return True
    raise ConfigError(f"unknown corruption class {name!r}")


def applicable(name: str, parse: str) -> bool:
    """Would corruption ``name`` change ``parse`` when applied alone?"""
    return _apply(name, _split(parse), random.Random(0))


def corrupt(parse: str, profile: CorruptionProfile, key: str = "") -> tuple[str, tuple[str, ...]]:
    """Corrupt ``parse``; returns (text, classes that fired).

    The random stream is derived from ``profile.seed`` and ``key`` only, so
    results do not depend on call order or concurrency.
    """
    parts = _split(parse)
    fired = []
    for name in CORRUPTION_CLASSES:
        rate = float(profile.rates.get(name, 0.0))
        rng = random.Random(f"{profile.seed}:{name}:{key}")
        if rate > 0 and rng.random() < rate and _apply(name, parts, rng):
            fired.append(name)
    return _join(parts), tuple(fired)


class CorruptingBackend(Backend):
    """Oracle wrapper that damages the gold parse per a CorruptionProfile."""

    can_score = False
    max_concurrency = 0

    def __init__(self, inner: OracleBackend, profile: CorruptionProfile):
        self.inner = inner
        self.profile = profile
        self.name = f"corrupt[{','.join(profile.error_classes) or 'none'}]"

    def corrupted(self, prompt: str) -> tuple[str, tuple[str, ...]]:
        gold = self.inner.gold_for(prompt)
        return corrupt(gold, self.profile, key=question_from_prompt(prompt))

    def complete(self, prompt, stop=None, max_tokens=64):
        return self.corrupted(prompt)[0]


# --------------------------------------------------------------------------
# config


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parser


def endpoint_from_config(parser: configparser.ConfigParser) -> EndpointConfig:
    if not parser.has_section("backend") or not parser["backend"].get("url"):
        raise ConfigError("config needs [backend] url")
    sec = parser["backend"]
    return EndpointConfig(
        url=sec["url"],
        model=sec.get("model", ""),
        api_key_env=sec.get("api_key_env", "OPENAI_API_KEY"),
        timeout=sec.getfloat("timeout", fallback=30.0),
        max_concurrency=sec.getint("max_concurrency", fallback=4),
        max_tokens=sec.getint("max_tokens", fallback=64),
        chat=sec.getboolean("chat", fallback=False),
    )


def profile_from_config(parser: configparser.ConfigParser) -> CorruptionProfile:
    if not parser.has_section("corruption"):
        return CorruptionProfile()
    sec = parser["corruption"]
    rates = {}
    base = sec.getfloat("rate", fallback=None)
    for name in CORRUPTION_CLASSES:
        if name in sec or name.lower() in sec:
            rates[name] = float(sec.get(name, sec.get(name.lower())))
        elif base is not None:
            rates[name] = base
    return CorruptionProfile(rates=rates, seed=sec.getint("seed", fallback=0))


def backend_from_config(parser: configparser.ConfigParser, mapping: Optional[Mapping[str, str]] = None,
                        seed: Optional[int] = None) -> Backend:
    """Build the backend named by ``[backend] kind`` (http, oracle, corrupting)."""
    kind = parser.get("backend", "kind", fallback="http")
    if kind == "http":
        return HttpBackend(endpoint_from_config(parser))
    if mapping is None:
        raise ConfigError(f"backend kind {kind!r} needs a question -> parse mapping")
    oracle = OracleBackend(mapping)
    if kind == "oracle":
        return oracle
    if kind == "corrupting":
        profile = profile_from_config(parser)
        if seed is not None:
            profile = CorruptionProfile(rates=profile.rates, seed=seed)
        return CorruptingBackend(oracle, profile)
    raise ConfigError(f"unknown backend kind {kind!r}")
