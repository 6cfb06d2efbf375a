"""BM25 ranking and RM3 pseudo-relevance feedback over an :class:`~qvfuse.index.Index`."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qvfuse.errors import EmptyQueryWarning, NoFeedbackWarning
from qvfuse.index import Index
from qvfuse.types import Ranking


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75
    depth: int = 1000

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0, 1], got {self.b}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")


@dataclass(frozen=True)
class Rm3Params:
    fb_docs: int = 10
    fb_terms: int = 10
    orig_weight: float = 0.5

    def __post_init__(self):
        if self.fb_docs < 1 or self.fb_terms < 1:
            raise ValueError("fb_docs and fb_terms must be >= 1")
        if not 0 <= self.orig_weight <= 1:
            raise ValueError(f"orig_weight must be in [0, 1], got {self.orig_weight}")


def idf(df: int, n: int) -> float:
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_term_score(tf: int, dl: int, df: int, n: int, avgdl: float, params: Bm25Params = Bm25Params()) -> float:
    if avgdl <= 0:
        raise ValueError(f"avgdl must be > 0, got {avgdl}")
    if not 1 <= df <= n:
        raise ValueError(f"need 1 <= df <= N, got df={df}, N={n}")
    if tf == 0:
        return 0.0
    norm = params.k1 * (1 - params.b + params.b * dl / avgdl)
    return idf(df, n) * (tf * (params.k1 + 1)) / (tf + norm)


def _term_scores(index: Index, term: str, params: Bm25Params):
    """Vectorized bm25_term_score over the postings of ``term``."""
    arrays = index.postings_arrays(term)
    if arrays is None:
        return None
    ords, tfs = arrays
    tf = tfs.astype(np.float64)
    dl = index.doc_lens[ords]
    norm = params.k1 * (1 - params.b + params.b * dl / index.avg_doc_len)
    return ords, idf(len(ords), index.num_docs) * (tf * (params.k1 + 1)) / (tf + norm)


def _rank(index: Index, scores: np.ndarray, touched: np.ndarray, topic_id: str, tag: str, depth: int) -> Ranking:
    cand = np.flatnonzero(touched)
    if len(cand) == 0:
        return Ranking(topic_id, tag, [])
    # primary key: score descending; secondary: doc_id ascending
    order = np.lexsort((index.id_rank[cand], -scores[cand]))[:depth]
    top = cand[order]
    return Ranking(topic_id, tag, [(index.doc_ids[o], float(scores[o])) for o in top.tolist()])


def search_weighted(
    index: Index,
    weighted_query: Sequence[tuple[str, float]],
    params: Bm25Params = Bm25Params(),
    *,
    topic_id: str = "",
    tag: str = "bm25",
) -> Ranking:
    """Rank by sum of weight * BM25 contribution over already-analyzed terms."""
    if not weighted_query:
        warnings.warn("query has no terms after analysis", EmptyQueryWarning, stacklevel=2)
        return Ranking(topic_id, tag, [])
    scores = np.zeros(index.num_docs)
    touched = np.zeros(index.num_docs, dtype=bool)
    # fixed summation order keeps scores bit-identical however the query is ordered
    for term, weight in sorted(weighted_query):
        if weight == 0:
            continue
        hit = _term_scores(index, term, params)
        if hit is None:
            continue
        ords, s = hit
        scores[ords] += weight * s
        touched[ords] = True
    return _rank(index, scores, touched, topic_id, tag, params.depth)


def query_terms(index: Index, query: str) -> list[tuple[str, float]]:
    """Analyzed query as ``(term, count)`` pairs in first-occurrence order."""
    return [(t, float(c)) for t, c in Counter(index.analyzer(query)).items()]


def search(
    index: Index, query: str, params: Bm25Params = Bm25Params(), *, topic_id: str = "", tag: str = "bm25"
) -> Ranking:
    terms = query_terms(index, query)
    if not terms:
        warnings.warn(f"query {query!r} has no terms after analysis", EmptyQueryWarning, stacklevel=2)
        return Ranking(topic_id, tag, [])
    return search_weighted(index, terms, params, topic_id=topic_id, tag=tag)


def _top_terms(weights: dict[str, float], k: int) -> list[tuple[str, float]]:
    return sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def rm3_expand(
    index: Index, query: str, params: Rm3Params = Rm3Params(), bm25: Bm25Params = Bm25Params()
) -> list[tuple[str, float]]:
    """Interpolate the query model with a relevance model from the top feedback docs.

    Returns ``(term, weight)`` pairs, heaviest first, with weights summing to 1.
    """
    counts = Counter(index.analyzer(query))
    qlen = sum(counts.values())
    query_model = {t: c / qlen for t, c in counts.items()} if qlen else {}
    lam = params.orig_weight

    initial = search_weighted(index, list(counts.items()), bm25) if counts else Ranking("", "", [])
    feedback = initial.entries[: params.fb_docs]
    total = sum(score for _, score in feedback)
    if not feedback or total <= 0:
        warnings.warn(f"no feedback documents for query {query!r}; not expanded", NoFeedbackWarning, stacklevel=2)
        return _top_terms(query_model, len(query_model))

    relevance: dict[str, float] = {}
    for doc_id, score in feedback:
        ordinal = index.ordinal(doc_id)
        dl = int(index.doc_lens[ordinal])
        doc_weight = score / total
        for term, tf in index.doc_terms(ordinal).items():
            relevance[term] = relevance.get(term, 0.0) + tf / dl * doc_weight
    kept = _top_terms(relevance, params.fb_terms)
    kept_mass = sum(w for _, w in kept)

    combined: dict[str, float] = {}
    if lam > 0:
        for t, w in query_model.items():
            combined[t] = lam * w
    if lam < 1:
        for t, w in kept:
            combined[t] = combined.get(t, 0.0) + (1 - lam) * w / kept_mass
    return _top_terms(combined, len(combined))


def search_rm3(
    index: Index,
    query: str,
    params: Rm3Params = Rm3Params(),
    bm25: Bm25Params = Bm25Params(),
    *,
    topic_id: str = "",
    tag: str = "bm25-rm3",
) -> Ranking:
    weighted = rm3_expand(index, query, params, bm25)
    return search_weighted(index, weighted, bm25, topic_id=topic_id, tag=tag)
