"""Reciprocal rank fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from qvfuse.types import Ranking


@dataclass(frozen=True)
class RrfParams:
    k: float = 60.0
    cutoff: int = 1000

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")


def fusion_tag(strategy: str, m: int, k: float) -> str:
    return f"{strategy}-rrf{k:g}-m{m}"


def rrf_fuse(rankings: Sequence[Ranking], params: RrfParams = RrfParams(), tag: str | None = None) -> Ranking:
    """Score each document by the sum of 1 / (k + rank) over the rankings that contain it."""
    if not rankings:
        raise ValueError("rrf_fuse needs at least one ranking")
    topic_id = rankings[0].topic_id
    for r in rankings:
        if r.topic_id != topic_id:
            raise ValueError(f"cannot fuse rankings of different topics: {topic_id!r} vs {r.topic_id!r}")

    contributions: dict[str, list[float]] = {}
    for r in rankings:
        for rank, (doc_id, _) in enumerate(r.entries, start=1):
            contributions.setdefault(doc_id, []).append(1.0 / (params.k + rank))
    # sorting each doc's contributions makes the float sum independent of input order
    scores = {d: sum(sorted(c)) for d, c in contributions.items()}
    fused = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[: params.cutoff]
    return Ranking(topic_id, tag if tag is not None else f"rrf{params.k:g}", fused)


def fuse_first_m(
    variant_rankings: Sequence[Ranking], m: int, params: RrfParams = RrfParams(), tag: str | None = None
) -> Ranking:
    """Fuse the first ``m`` rankings in variant order."""
    if not 1 <= m <= len(variant_rankings):
        raise ValueError(f"m={m} out of range for {len(variant_rankings)} variant rankings")
    return rrf_fuse(variant_rankings[:m], params, tag=tag)
