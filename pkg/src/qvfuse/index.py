"""Immutable in-memory inverted index with a versioned binary file format.

Binary layout (little endian)::

    magic      6 bytes  b"QVFIDX"
    version    uint16
    length     uint64   payload byte count
    crc32      uint32   of the payload
    payload:
      header_len uint32, header JSON (analyzer config, doc ids, terms)
      doc_lens   int64[N]
      df         int64[T]          postings-list length per term, in header order
      ordinals   int32[sum(df)]
      tfs        int32[sum(df)]
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from qvfuse.analyzer import Analyzer, AnalyzerConfig
from qvfuse.errors import IndexFormatError, IndexIntegrityError

MAGIC = b"QVFIDX"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<6sHQI")


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str | None = None

    def full_text(self) -> str:
        return f"{self.title}\n{self.text}" if self.title else self.text


class Posting(NamedTuple):
    doc_ordinal: int
    term_frequency: int


class Index:
    """Built once by :func:`build` or :func:`load`; read-only afterwards."""

    def __init__(self, analyzer_config, doc_ids, doc_lens, postings):
        self.analyzer_config: AnalyzerConfig = analyzer_config
        self.analyzer = Analyzer(analyzer_config)
        self.doc_ids: list[str] = list(doc_ids)
        self.doc_lens = np.asarray(doc_lens, dtype=np.int64)
        # term -> (ordinals int32, tfs int32), ordinals strictly ascending
        self._postings: dict[str, tuple[np.ndarray, np.ndarray]] = postings
        self._ordinal = {d: i for i, d in enumerate(self.doc_ids)}
        # position of each doc in lexicographic doc-id order, for tie breaking
        order = sorted(range(len(self.doc_ids)), key=self.doc_ids.__getitem__)
        self.id_rank = np.empty(len(self.doc_ids), dtype=np.int64)
        self.id_rank[order] = np.arange(len(self.doc_ids))
        self._forward: list[dict[str, int]] | None = None

    @property
    def num_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def avg_doc_len(self) -> float:
        return float(self.doc_lens.sum() / self.num_docs) if self.num_docs else 0.0

    @property
    def vocabulary(self) -> list[str]:
        return list(self._postings)

    def __contains__(self, term: str) -> bool:
        return term in self._postings

    def df(self, term: str) -> int:
        p = self._postings.get(term)
        return 0 if p is None else len(p[0])

    def cf(self, term: str) -> int:
        p = self._postings.get(term)
        return 0 if p is None else int(p[1].sum())

    def postings(self, term: str) -> list[Posting]:
        p = self._postings.get(term)
        if p is None:
            return []
        return [Posting(int(o), int(tf)) for o, tf in zip(*p)]

    def postings_arrays(self, term: str) -> tuple[np.ndarray, np.ndarray] | None:
        return self._postings.get(term)

    def ordinal(self, doc_id: str) -> int:
        return self._ordinal[doc_id]

    def doc_terms(self, ordinal: int) -> dict[str, int]:
        """Term frequencies of one document (forward view, built lazily)."""
        if self._forward is None:
            forward: list[dict[str, int]] = [{} for _ in range(self.num_docs)]
            for term, (ords, tfs) in self._postings.items():
                for o, tf in zip(ords.tolist(), tfs.tolist()):
                    forward[o][term] = tf
            self._forward = forward
        return self._forward[ordinal]

    def __eq__(self, other):
        if not isinstance(other, Index):
            return NotImplemented
        if (
            self.analyzer_config != other.analyzer_config
            or self.doc_ids != other.doc_ids
            or not np.array_equal(self.doc_lens, other.doc_lens)
            or self._postings.keys() != other._postings.keys()
        ):
            return False
        return all(
            np.array_equal(a[0], other._postings[t][0]) and np.array_equal(a[1], other._postings[t][1])
            for t, a in self._postings.items()
        )

    def __repr__(self):
        return f"Index(N={self.num_docs}, terms={len(self._postings)}, avgdl={self.avg_doc_len:.2f})"


def build(corpus: Iterable[Document], config: AnalyzerConfig | None = None) -> Index:
    config = config or AnalyzerConfig()
    analyzer = Analyzer(config)
    doc_ids: list[str] = []
    doc_lens: list[int] = []
    seen: set[str] = set()
    ords: dict[str, list[int]] = {}
    tfs: dict[str, list[int]] = {}
    for doc in corpus:
        if not doc.doc_id or any(c.isspace() for c in doc.doc_id):
            raise ValueError(f"invalid doc_id {doc.doc_id!r}: must be non-empty without whitespace")
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        ordinal = len(doc_ids)
        doc_ids.append(doc.doc_id)
        terms = analyzer(doc.full_text())
        doc_lens.append(len(terms))
        for term, tf in Counter(terms).items():
            if term not in ords:
                ords[term] = []
                tfs[term] = []
            ords[term].append(ordinal)
            tfs[term].append(tf)
    postings = {
        t: (np.asarray(ords[t], dtype=np.int32), np.asarray(tfs[t], dtype=np.int32)) for t in sorted(ords)
    }
    return Index(config, doc_ids, doc_lens, postings)


def save(index: Index, path: str | Path) -> None:
    path = Path(path)
    terms = list(index._postings)
    header = json.dumps(
        {"analyzer": index.analyzer_config.to_dict(), "doc_ids": index.doc_ids, "terms": terms},
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    df = np.asarray([len(index._postings[t][0]) for t in terms], dtype="<i8")
    if terms:
        all_ords = np.concatenate([index._postings[t][0] for t in terms]).astype("<i4")
        all_tfs = np.concatenate([index._postings[t][1] for t in terms]).astype("<i4")
    else:
        all_ords = all_tfs = np.zeros(0, dtype="<i4")
    payload = b"".join(
        [
            struct.pack("<I", len(header)),
            header,
            index.doc_lens.astype("<i8").tobytes(),
            df.tobytes(),
            all_ords.tobytes(),
            all_tfs.tobytes(),
        ]
    )
    preamble = _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(payload), zlib.crc32(payload))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(preamble)
        f.write(payload)
    os.replace(tmp, path)


def load(path: str | Path) -> Index:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _PREAMBLE.size:
        if not MAGIC.startswith(data[: len(MAGIC)]):
            raise IndexFormatError(f"{path}: not an index file (bad magic bytes)")
        raise IndexIntegrityError(f"{path}: truncated index header")
    magic, version, length, crc = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise IndexFormatError(f"{path}: not an index file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"{path}: index format version {version}, expected {FORMAT_VERSION}")
    payload = data[_PREAMBLE.size :]
    if len(payload) != length:
        raise IndexIntegrityError(f"{path}: truncated index ({len(payload)} of {length} payload bytes)")
    if zlib.crc32(payload) != crc:
        raise IndexIntegrityError(f"{path}: checksum mismatch")

    (hlen,) = struct.unpack_from("<I", payload)
    header = json.loads(payload[4 : 4 + hlen].decode("utf-8"))
    pos = 4 + hlen
    n = len(header["doc_ids"])
    terms = header["terms"]

    def take(count, dtype):
        nonlocal pos
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    doc_lens = take(n, "<i8").astype(np.int64)
    df = take(len(terms), "<i8")
    total = int(df.sum())
    all_ords = take(total, "<i4").astype(np.int32)
    all_tfs = take(total, "<i4").astype(np.int32)
    bounds = np.concatenate([[0], np.cumsum(df)])
    postings = {
        t: (all_ords[bounds[i] : bounds[i + 1]], all_tfs[bounds[i] : bounds[i + 1]]) for i, t in enumerate(terms)
    }
    return Index(AnalyzerConfig.from_dict(header["analyzer"]), header["doc_ids"], doc_lens, postings)


def dump_text(index: Index) -> str:
    """Plain-text rendering, stable across runs; see :func:`parse_dump`.

    Lines: ``N <n>``, ``avgdl <x>``, one ``doc <ordinal> <doc_id> <dl>`` per
    document, then ``term <term> <df> <cf> <ord>:<tf> ...`` per term.
    """
    lines = ["# qvfuse index dump v1", f"N {index.num_docs}", f"avgdl {index.avg_doc_len:.6f}"]
    for i, (doc_id, dl) in enumerate(zip(index.doc_ids, index.doc_lens.tolist())):
        lines.append(f"doc {i} {doc_id} {dl}")
    for term, (ords, tfs) in index._postings.items():
        plist = " ".join(f"{o}:{tf}" for o, tf in zip(ords.tolist(), tfs.tolist()))
        lines.append(f"term {term} {len(ords)} {int(tfs.sum())} {plist}")
    return "\n".join(lines) + "\n"


def parse_dump(text: str, config: AnalyzerConfig | None = None) -> Index:
    doc_ids, doc_lens, postings = [], [], {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        kind, *rest = line.split()
        if kind == "doc":
            doc_ids.append(rest[1])
            doc_lens.append(int(rest[2]))
        elif kind == "term":
            pairs = [p.split(":") for p in rest[3:]]
            postings[rest[0]] = (
                np.asarray([int(o) for o, _ in pairs], dtype=np.int32),
                np.asarray([int(tf) for _, tf in pairs], dtype=np.int32),
            )
    return Index(config or AnalyzerConfig(), doc_ids, doc_lens, postings)
