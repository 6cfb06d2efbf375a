"""Seeded synthetic test collections with constructed relevance.

Every topic owns a latent set of pseudo-words. Relevant documents mix a random
subset of that set into background text; some nonrelevant "distractor"
documents repeat title words only. The title shows a few latent words, the
description and narrative reveal more, and the rest appear only in documents.
A title query therefore misses relevant documents that richer queries find.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qvfuse.analyzer import Analyzer, AnalyzerConfig
from qvfuse.index import Document
from qvfuse.types import Topic

LATENT_PER_TOPIC = 12
DESC_EXTRA = 4
NARR_EXTRA = 3
MIN_BACKGROUND = 200
DOC_LEN = (60, 140)
RELEVANT_FACETS = (3, 7)  # latent words per relevant doc, half-open range
_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthSpec:
    num_topics: int = 20
    docs_per_topic: int = 100
    relevant_per_topic: int = 10
    vocab_size: int = 5000
    noise: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("num_topics", "docs_per_topic", "relevant_per_topic", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.relevant_per_topic > self.docs_per_topic:
            raise ValueError("relevant_per_topic must not exceed docs_per_topic")
        if not 0 <= self.noise <= 1:
            raise ValueError("noise must be in [0, 1]")


@dataclass
class SynthCollection:
    docs: list[Document]
    topics: list[Topic]
    qrels: dict[str, dict[str, int]]
    latent: dict[str, list[str]] = field(default_factory=dict)


def _make_vocabulary(size: int, rng: np.random.Generator, analyzer: Analyzer) -> list[str]:
    """``size`` pronounceable pseudo-words, each analyzing to its own single stem.

    Stems are fixpoints of the analyzer, so re-analyzing analyzed text is a no-op.
    """
    words, stems = [], set()
    attempts = 0
    while len(words) < size:
        attempts += 1
        if attempts > 50 * size + 1000:
            raise ValueError(f"could not build a vocabulary of {size} distinct words")
        syllables = int(rng.integers(2, 4))
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syllables))
        w += _CONSONANTS[rng.integers(len(_CONSONANTS))]
        terms = analyzer(w)
        if len(terms) != 1 or terms[0] in stems or analyzer(terms[0]) != terms:
            continue
        stems.add(terms[0])
        words.append(w)
    return words


def _join_words(words: list[str], conj: str) -> str:
    return words[0] if len(words) == 1 else f"{', '.join(words[:-1])} {conj} {words[-1]}"


def generate_collection(spec: SynthSpec, analyzer_config: AnalyzerConfig | None = None) -> SynthCollection:
    needed = spec.num_topics * LATENT_PER_TOPIC + MIN_BACKGROUND
    if spec.vocab_size < needed:
        raise ValueError(f"vocab_size {spec.vocab_size} too small: need at least {needed} for {spec.num_topics} topics")
    rng = np.random.default_rng(spec.seed)
    analyzer = Analyzer(analyzer_config or AnalyzerConfig())
    vocab = _make_vocabulary(spec.vocab_size, rng, analyzer)
    reserved = spec.num_topics * LATENT_PER_TOPIC
    background = vocab[reserved:]
    zipf = 1.0 / (np.arange(len(background)) + 2.7)
    zipf /= zipf.sum()

    def background_words(n):
        return [background[i] for i in rng.choice(len(background), size=n, p=zipf)]

    total_docs = spec.num_topics * spec.docs_per_topic
    doc_numbers = rng.permutation(total_docs)
    topics, docs, qrels, latent_sets = [], [], {}, {}
    for t in range(spec.num_topics):
        tid = str(301 + t)
        latent = vocab[t * LATENT_PER_TOPIC : (t + 1) * LATENT_PER_TOPIC]
        latent_sets[tid] = latent
        n_title = int(rng.integers(2, 4))
        title_w = latent[:n_title]
        desc_w = latent[n_title : n_title + DESC_EXTRA]
        narr_w = latent[n_title + DESC_EXTRA : n_title + DESC_EXTRA + NARR_EXTRA]
        topics.append(
            Topic(
                tid,
                " ".join(title_w),
                f"Find information on {' '.join(title_w)} including {_join_words(desc_w, 'and')}.",
                f"A relevant document mentions {_join_words(narr_w, 'or')}.",
            )
        )

        judged: dict[str, int] = {}
        for j in range(spec.docs_per_topic):
            doc_id = f"SYN{doc_numbers[t * spec.docs_per_topic + j]:06d}"
            length = int(rng.integers(*DOC_LEN))
            words = background_words(length)
            if j < spec.relevant_per_topic:
                k = int(rng.integers(*RELEVANT_FACETS))
                facets = [latent[i] for i in rng.choice(LATENT_PER_TOPIC, size=k, replace=False)]
                for w in facets:
                    words += [w] * int(rng.integers(1, 5))
                judged[doc_id] = 2 if k >= 5 else 1
            elif rng.random() < spec.noise:
                # distractor: title words without the rest of the topic
                for w in rng.choice(title_w, size=int(rng.integers(1, len(title_w) + 1)), replace=False):
                    words += [str(w)] * int(rng.integers(1, 3))
                judged[doc_id] = 0
            elif rng.random() < 0.5:
                judged[doc_id] = 0
            rng.shuffle(words)
            docs.append(Document(doc_id, " ".join(words)))
        qrels[tid] = judged
    docs.sort(key=lambda d: d.doc_id)
    return SynthCollection(docs, topics, qrels, latent_sets)
