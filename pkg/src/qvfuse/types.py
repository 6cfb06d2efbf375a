from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator


@dataclass(frozen=True)
class Topic:
    topic_id: str
    title: str
    description: str = ""
    narrative: str = ""

    def __post_init__(self):
        if not self.title.strip():
            raise ValueError(f"topic {self.topic_id!r} has an empty title")


@dataclass(frozen=True)
class QueryVariantSet:
    topic_id: str
    strategy: str
    model_id: str
    seed: int
    queries: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        for q in self.queries:
            if not q:
                raise ValueError(f"empty query in variant set for topic {self.topic_id!r}")


@dataclass
class Ranking:
    """Ranked list of ``(doc_id, score)`` for one topic; rank i is entries[i-1]."""

    topic_id: str
    system_tag: str
    entries: list[tuple[str, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return iter(self.entries)

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def check(self) -> None:
        seen = set()
        prev = float("inf")
        for doc_id, score in self.entries:
            if doc_id in seen:
                raise ValueError(f"duplicate doc {doc_id!r} in ranking for topic {self.topic_id!r}")
            if score > prev:
                raise ValueError(f"score inversion at doc {doc_id!r} in topic {self.topic_id!r}")
            seen.add(doc_id)
            prev = score
