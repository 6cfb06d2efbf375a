"""Prompt construction, chat-completion clients and query-variant parsing.

Three prompt strategies are supported:

* ``P1``: role, request for keyword queries about the title, output format.
* ``P2``: as P1, plus the topic description and narrative.
* ``P3``: as P1, plus example queries written for other topics.

:class:`StubClient` replaces the language model with a seeded sampler of topic
terms so that whole experiments run offline and deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from qvfuse.analyzer import Analyzer, AnalyzerConfig
from qvfuse.errors import ConfigError, ParseError, ShortfallWarning, TransportError
from qvfuse.types import QueryVariantSet, Topic

log = logging.getLogger(__name__)

ROLE_SENTENCE = "You are a generator of search query variants."
FORMAT_SENTENCE = "Your reply is a numbered list of search queries."
STRATEGIES = ("P1", "P2", "P3")
DEFAULT_N = 100
DEFAULT_SEED = 42


@dataclass(frozen=True)
class Example:
    title: str
    queries: tuple[str, ...]


@dataclass(frozen=True)
class PromptStrategy:
    name: str
    examples: tuple[Example, ...] = ()

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigError(f"unknown prompt strategy {self.name!r}; expected one of {STRATEGIES}")
        if self.name == "P3" and not any(e.queries for e in self.examples):
            raise ConfigError("strategy P3 needs at least one example with at least one query")

    @classmethod
    def named(cls, name: str, examples_path: str | Path | None = None) -> "PromptStrategy":
        return cls(name, load_examples(examples_path) if name == "P3" else ())


def load_examples(path: str | Path | None = None) -> tuple[Example, ...]:
    """Read P3 examples: ``{"examples": [{"title": ..., "queries": [...]}, ...]}``."""
    if path is None:
        text = resources.files("qvfuse.data").joinpath("p3_examples.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    data = json.loads(text)
    return tuple(Example(e["title"], tuple(e["queries"])) for e in data["examples"])


@dataclass(frozen=True)
class Prompt:
    messages: tuple[tuple[str, str], ...]
    strategy: str
    temperature: float = 0.0
    seed: int = DEFAULT_SEED
    n: int = DEFAULT_N

    def as_chat(self) -> list[dict[str, str]]:
        return [{"role": role, "content": content} for role, content in self.messages]


def count_sentence(title: str, n: int) -> str:
    count = "one hundred" if n == 100 else str(n)
    return f"Generate {count} keyword queries about {title}."


def example_sentence(example: Example) -> str:
    return f"Example queries for the topic about {example.title} include {', '.join(example.queries)}."


def build_prompt(
    topic: Topic,
    strategy: PromptStrategy,
    n: int = DEFAULT_N,
    *,
    temperature: float = 0.0,
    seed: int = DEFAULT_SEED,
    system_role: bool = False,
) -> Prompt:
    """Assemble the prompt blocks, separated by blank lines.

    With ``system_role`` the role sentence becomes a separate system message.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    blocks = [count_sentence(topic.title, n)]
    if strategy.name == "P2":
        context = " ".join(p for p in (topic.description, topic.narrative) if p)
        if context:
            blocks.append(context)
    elif strategy.name == "P3":
        blocks.append("\n".join(example_sentence(e) for e in strategy.examples if e.queries))
    blocks.append(FORMAT_SENTENCE)
    if system_role:
        messages = (("system", ROLE_SENTENCE), ("user", "\n\n".join(blocks)))
    else:
        messages = (("user", "\n\n".join([ROLE_SENTENCE, *blocks])),)
    return Prompt(messages, strategy.name, temperature, seed, n)


_ITEM_RE = re.compile(r"^\s*(\d+)\s*[.)]\s*(.*)$")
_QUOTES = "\"'`“”‘’«»"


def parse_numbered_list(text: str) -> list[str]:
    """Queries from lines starting with ``<int>.`` or ``<int>)``; other lines are ignored."""
    queries = []
    for line in text.split("\n"):
        m = _ITEM_RE.match(line)
        if m is None:
            continue
        q = m.group(2).strip().strip(_QUOTES).strip()
        if q:
            queries.append(q)
    if not queries:
        raise ParseError("no numbered queries found in reply", raw=text)
    return queries


def render_numbered_list(queries: Sequence[str]) -> str:
    return "\n".join(f"{i}. {q}" for i, q in enumerate(queries, start=1))


# ---------------------------------------------------------------- offline stub

STUB_MIN_TERMS = 2
STUB_MAX_TERMS = 5
STUB_TITLE_WEIGHT = 3.0


def _unique_by_stem(analyzer: Analyzer, words: Sequence[str], exclude: set[str]) -> list[str]:
    out = []
    for w in words:
        stem = analyzer(w)
        key = stem[0] if stem else w
        if key not in exclude:
            exclude.add(key)
            out.append(w)
    return out


def stub_generate(topic: Topic, seed: int, n: int, analyzer_config: AnalyzerConfig | None = None) -> list[str]:
    """Deterministic stand-in for a language model.

    Each query is 2 to 5 distinct non-stopword terms sampled without replacement
    from title and description, title terms weighted three times higher.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    analyzer = Analyzer(analyzer_config or AnalyzerConfig())
    seen: set[str] = set()
    title_terms = _unique_by_stem(analyzer, analyzer.tokens(topic.title), seen)
    if not title_terms:
        raise ValueError(f"topic {topic.topic_id!r}: title has no terms after analysis")
    desc_terms = _unique_by_stem(analyzer, analyzer.tokens(topic.description), seen)
    pool = title_terms + desc_terms
    base_weights = [STUB_TITLE_WEIGHT] * len(title_terms) + [1.0] * len(desc_terms)

    rng = random.Random(f"qvfuse-stub|{seed}|{topic.topic_id}|{topic.title}|{topic.description}")
    queries = []
    for _ in range(n):
        length = min(rng.randint(STUB_MIN_TERMS, STUB_MAX_TERMS), len(pool))
        idx = list(range(len(pool)))
        weights = list(base_weights)
        picked = []
        for _ in range(length):
            j = rng.choices(range(len(idx)), weights=weights)[0]
            picked.append(pool[idx.pop(j)])
            weights.pop(j)
        queries.append(" ".join(picked))
    return queries


class ChatClient(Protocol):
    model_id: str

    def complete(self, prompt: Prompt, topic: Topic) -> str: ...


class StubClient:
    """Answers prompts with :func:`stub_generate`.

    It sees what the prompt sees: description terms only under P2.
    """

    model_id = "stub"

    def __init__(self, analyzer_config: AnalyzerConfig | None = None):
        self.analyzer_config = analyzer_config

    def complete(self, prompt: Prompt, topic: Topic) -> str:
        visible = topic if prompt.strategy == "P2" else Topic(topic.topic_id, topic.title)
        return render_numbered_list(stub_generate(visible, prompt.seed, prompt.n, self.analyzer_config))


# ---------------------------------------------------------------- live client


class ResponseCache:
    """On-disk reply cache, one JSON file per request key; writes are atomic."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(prompt: Prompt, model_id: str) -> str:
        payload = json.dumps(
            {"messages": prompt.as_chat(), "model": model_id, "seed": prompt.seed, "temperature": prompt.temperature},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def get(self, key: str) -> str | None:
        path = self.directory / f"{key}.json"
        try:
            return json.loads(path.read_text("utf-8"))["reply"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            log.warning("ignoring corrupt cache entry %s", path)
            return None

    def put(self, key: str, reply: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump({"reply": reply}, f, ensure_ascii=False)
        os.replace(tmp, self.directory / f"{key}.json")


RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass
class ChatCompletionClient:
    """OpenAI-compatible ``/chat/completions`` client with retries and caching."""

    model_id: str = "gpt-4o"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    max_retries: int = 5
    backoff_base: float = 1.0
    timeout: float = 120.0
    cache: ResponseCache | None = None
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    _http: httpx.Client | None = field(default=None, init=False, repr=False)

    def _client(self) -> httpx.Client:
        if self._http is None:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ConfigError(f"environment variable {self.api_key_env} is not set")
            self._http = httpx.Client(
                base_url=self.base_url,
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
                transport=self.transport,
            )
        return self._http

    def request_body(self, prompt: Prompt) -> dict:
        return {
            "model": self.model_id,
            "messages": prompt.as_chat(),
            "temperature": prompt.temperature,
            "seed": prompt.seed,
        }

    def complete(self, prompt: Prompt, topic: Topic | None = None) -> str:
        key = ResponseCache.key(prompt, self.model_id)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        reply = self._post(self.request_body(prompt))
        if self.cache is not None:
            self.cache.put(key, reply)
        return reply

    def _post(self, body: dict) -> str:
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self._client().post("/chat/completions", json=body)
            except httpx.TransportError as e:
                last = f"{type(e).__name__}: {e}"
                continue
            if resp.status_code in RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise TransportError(f"chat completion failed: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise TransportError(f"malformed chat completion response: {e}") from e
        raise TransportError(f"chat completion failed after {self.max_retries + 1} attempts ({last})")


# ---------------------------------------------------------------- generation


def generate_variants(
    client: ChatClient,
    topic: Topic,
    strategy: PromptStrategy,
    n: int = DEFAULT_N,
    *,
    seed: int = DEFAULT_SEED,
    temperature: float = 0.0,
    system_role: bool = False,
) -> QueryVariantSet:
    """Prompt ``client`` for ``n`` queries; fewer are returned with a warning, never padded."""
    prompt = build_prompt(topic, strategy, n, temperature=temperature, seed=seed, system_role=system_role)
    reply = client.complete(prompt, topic)
    try:
        queries = parse_numbered_list(reply)
    except ParseError as e:
        log.error("unparseable reply for topic %s: %r", topic.topic_id, reply)
        raise ParseError(f"topic {topic.topic_id}: {e}", raw=reply) from e
    if len(queries) < n:
        warnings.warn(
            f"topic {topic.topic_id}: {len(queries)} of {n} queries parsed", ShortfallWarning, stacklevel=2
        )
    return QueryVariantSet(topic.topic_id, strategy.name, client.model_id, seed, tuple(queries[:n]))


def generate_all(
    client: ChatClient,
    topics: Sequence[Topic],
    strategy: PromptStrategy,
    n: int = DEFAULT_N,
    *,
    max_workers: int = 1,
    **kwargs,
) -> list[QueryVariantSet]:
    """Variant sets in topic order, with at most ``max_workers`` requests in flight."""
    if max_workers <= 1:
        return [generate_variants(client, t, strategy, n, **kwargs) for t in topics]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda t: generate_variants(client, t, strategy, n, **kwargs), topics))
