"""Readers and writers for TREC topics, qrels and run files, query-variant
datasets and the JSON-lines corpus.

All files are UTF-8. CRLF line endings are accepted on input; output always
uses LF. Parsers take ``strict=True`` (raise on any violation) or
``strict=False`` (warn, repair where possible, continue).
"""

from __future__ import annotations

import json
import re
import warnings
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from qvfuse.errors import FormatWarning, InputError, ParseError, ValidationError
from qvfuse.index import Document
from qvfuse.types import QueryVariantSet, Ranking, Topic

# ---------------------------------------------------------------- helpers


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as f:
            text = f.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    return text.replace("\r\n", "\n")


def _lines(source) -> list[str]:
    """Lines of ``source``: a path, a file object, or literal text.

    A ``str`` containing a newline is text. Otherwise it is text only if no
    such file exists and it contains whitespace or markup (``<``, ``{``).
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and _looks_like_text(source):
        text = source
    else:
        text = _read_text(source)
    return text.replace("\r\n", "\n").split("\n")


def _looks_like_text(s: str) -> bool:
    if "\n" in s:
        return True
    return any(c.isspace() or c in "<{" for c in s) and not _is_file(s)


def _is_file(s: str) -> bool:
    try:
        return Path(s).is_file()
    except (OSError, ValueError):
        return False


def _problem(strict: bool, exc: ParseError):
    if strict:
        raise exc
    warnings.warn(str(exc), FormatWarning, stacklevel=3)


def _normalize_ws(s: str) -> str:
    return " ".join(s.split())


def natural_key(topic_id: str):
    return (0, int(topic_id), "") if topic_id.isdigit() else (1, 0, topic_id)


# ---------------------------------------------------------------- topics

_TAG_RE = re.compile(r"<(/?)(top|num|title|desc|narr)>", re.IGNORECASE)
_LABEL_RE = {
    "num": re.compile(r"^\s*number\s*:", re.IGNORECASE),
    "desc": re.compile(r"^\s*description\s*:", re.IGNORECASE),
    "narr": re.compile(r"^\s*narrative\s*:", re.IGNORECASE),
    "title": re.compile(r"^\s*topic\s*:", re.IGNORECASE),
}


def parse_topics_trec(text: str) -> list[Topic]:
    """Parse ``<top>`` blocks; field tags may be left open (classic) or closed."""
    text = text.replace("\r\n", "\n")
    topics = []
    block_start = None
    fields: dict[str, str] = {}
    current = None
    cursor = 0

    def close_field(end):
        nonlocal current
        if current is not None:
            fields[current] = fields.get(current, "") + text[cursor:end]
        current = None

    for m in _TAG_RE.finditer(text):
        closing, tag = m.group(1) == "/", m.group(2).lower()
        if tag == "top":
            if not closing:
                block_start = m.start()
                fields = {}
                current = None
            elif block_start is not None:
                close_field(m.start())
                topics.append(_make_topic(fields, text, block_start))
                block_start = None
            cursor = m.end()
            continue
        if block_start is None:
            continue
        close_field(m.start())
        if not closing:
            current = tag
        cursor = m.end()
    if block_start is not None:
        line = text.count("\n", 0, block_start) + 1
        raise ParseError("unterminated <top> block", line=line)
    return topics


def _make_topic(fields: dict[str, str], text: str, start: int) -> Topic:
    line = text.count("\n", 0, start) + 1
    cleaned = {}
    for k, v in fields.items():
        v = _LABEL_RE[k].sub("", v, count=1) if k in _LABEL_RE else v
        cleaned[k] = _normalize_ws(v)
    num = cleaned.get("num", "")
    if not num:
        raise ParseError("topic block without <num>", line=line)
    if not cleaned.get("title"):
        raise ParseError(f"topic {num} without <title>", line=line)
    return Topic(num, cleaned["title"], cleaned.get("desc", ""), cleaned.get("narr", ""))


def parse_topics_jsonl(text: str) -> list[Topic]:
    """One object per line: ``topic_id``, ``title``, optional ``description``, ``narrative``."""
    topics = []
    for n, line in enumerate(text.replace("\r\n", "\n").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            topic_id = str(obj["topic_id"])
            title = _normalize_ws(obj.get("title") or "")
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"bad topic record: {e}", line=n) from e
        if not title:
            raise ParseError(f"topic {topic_id} without title", line=n)
        topics.append(
            Topic(
                topic_id,
                title,
                _normalize_ws(obj.get("description") or ""),
                _normalize_ws(obj.get("narrative") or ""),
            )
        )
    return topics


def parse_topics(source) -> list[Topic]:
    """Topics from a path or a string, in TREC markup or JSON lines (auto-detected)."""
    text = "\n".join(_lines(source))
    if text.lstrip().startswith("{"):
        return parse_topics_jsonl(text)
    return parse_topics_trec(text)


def write_topics_jsonl(topics: Iterable[Topic], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in topics:
            obj = {"topic_id": t.topic_id, "title": t.title, "description": t.description, "narrative": t.narrative}
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")


def write_topics_trec(topics: Iterable[Topic], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in topics:
            f.write(
                f"<top>\n<num> Number: {t.topic_id}\n<title> {t.title}\n\n"
                f"<desc> Description:\n{t.description}\n\n<narr> Narrative:\n{t.narrative}\n</top>\n\n"
            )


# ---------------------------------------------------------------- qrels


def parse_qrels(source, strict: bool = True) -> dict[str, dict[str, int]]:
    """``topic iter doc grade`` lines into ``{topic: {doc: grade}}``."""
    qrels: dict[str, dict[str, int]] = {}
    for n, line in enumerate(_lines(source), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            _problem(strict, ParseError(f"expected 4 columns, got {len(parts)}", line=n))
            continue
        topic, _, doc, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError:
            _problem(strict, ParseError(f"non-integer grade {grade_s!r}", line=n))
            continue
        if grade < 0:
            _problem(strict, ParseError(f"negative grade {grade} for {topic}/{doc}", line=n))
            continue
        judged = qrels.setdefault(topic, {})
        if doc in judged:
            warnings.warn(
                f"line {n}: duplicate judgment for {topic}/{doc}; keeping last ({grade})", FormatWarning, stacklevel=2
            )
        judged[doc] = grade
    return qrels


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for topic in sorted(qrels, key=natural_key):
            for doc, grade in qrels[topic].items():
                f.write(f"{topic} 0 {doc} {grade}\n")


# ---------------------------------------------------------------- runs


def format_score(score: float) -> str:
    return f"{score:.6g}"


def write_run(rankings: Iterable[Ranking], path, tag: str | None = None) -> None:
    """Six-column TREC run: ``topic Q0 doc rank score tag``; scores to 6 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in rankings:
            run_tag = tag or r.system_tag or "qvfuse"
            for rank, (doc, score) in enumerate(r.entries, start=1):
                f.write(f"{r.topic_id} Q0 {doc} {rank} {format_score(score)} {run_tag}\n")


def parse_run(source, strict: bool = True) -> dict[str, Ranking]:
    """Rankings keyed by topic, in file order of first appearance.

    Strict mode rejects rank gaps, score inversions and duplicate documents;
    lenient mode warns, re-sorts by score (then given rank) and drops duplicates.
    """
    records: dict[str, list[tuple[int, float, str, int]]] = {}
    tags: dict[str, str] = {}
    for n, line in enumerate(_lines(source), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            _problem(strict, ParseError(f"expected 6 columns, got {len(parts)}", line=n))
            continue
        topic, _, doc, rank_s, score_s, tag = parts
        try:
            rank = int(rank_s)
            score = float(score_s)
        except ValueError:
            _problem(strict, ParseError(f"bad rank/score {rank_s!r} {score_s!r}", line=n))
            continue
        records.setdefault(topic, []).append((rank, score, doc, n))
        tags.setdefault(topic, tag)

    run = {}
    for topic, recs in records.items():
        problem = _check_run_topic(topic, recs)
        if problem is not None:
            _problem(strict, problem)
            recs = sorted(recs, key=lambda r: (-r[1], r[0]))
            seen = set()
            recs = [r for r in recs if not (r[2] in seen or seen.add(r[2]))]
        run[topic] = Ranking(topic, tags[topic], [(doc, score) for _, score, doc, _ in recs])
    return run


def _check_run_topic(topic, recs) -> ValidationError | None:
    seen = set()
    prev = float("inf")
    for i, (rank, score, doc, line) in enumerate(recs, start=1):
        if rank != i:
            return ValidationError(f"topic {topic}: expected rank {i}, found {rank}", line=line)
        if score > prev:
            return ValidationError(f"topic {topic}: score inversion at rank {rank}", line=line)
        if doc in seen:
            return ValidationError(f"topic {topic}: duplicate document {doc}", line=line)
        seen.add(doc)
        prev = score
    return None


# ---------------------------------------------------------------- query variants

_TSV_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_TSV_UNESCAPE_RE = re.compile(r"\\(.)")
_TSV_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape_tsv(s: str) -> str:
    return "".join(_TSV_ESCAPES.get(c, c) for c in s)


def unescape_tsv(s: str) -> str:
    return _TSV_UNESCAPE_RE.sub(lambda m: _TSV_UNESCAPES.get(m.group(1), m.group(0)), s)


def write_variants(sets: QueryVariantSet | Sequence[QueryVariantSet], path, fmt: str | None = None) -> None:
    """Write variant sets as JSON lines (full provenance) or TSV ``topic<TAB>rank<TAB>query``.

    The format follows the file suffix (``.tsv`` or ``.jsonl``) unless ``fmt`` is given.
    """
    if isinstance(sets, QueryVariantSet):
        sets = [sets]
    fmt = fmt or ("tsv" if str(path).endswith(".tsv") else "jsonl")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for vs in sets:
            for rank, q in enumerate(vs.queries, start=1):
                if fmt == "tsv":
                    f.write(f"{vs.topic_id}\t{rank}\t{escape_tsv(q)}\n")
                else:
                    obj = {
                        "topic_id": vs.topic_id,
                        "rank": rank,
                        "query": q,
                        "strategy": vs.strategy,
                        "model_id": vs.model_id,
                        "seed": vs.seed,
                    }
                    f.write(json.dumps(obj, ensure_ascii=False) + "\n")


def parse_variants(source, fmt: str | None = None) -> list[QueryVariantSet]:
    if fmt is None:
        fmt = "tsv" if str(source).endswith(".tsv") else "jsonl"
    rows: dict[str, list] = {}
    provenance: dict[str, tuple[str, str, int]] = {}
    for n, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        if fmt == "tsv":
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected 3 tab-separated columns, got {len(parts)}", line=n)
            topic, rank_s, query = parts[0], parts[1], unescape_tsv(parts[2])
            prov = ("", "", 0)
        else:
            try:
                obj = json.loads(line)
                topic, rank_s, query = str(obj["topic_id"]), obj["rank"], obj["query"]
                prov = (obj.get("strategy", ""), obj.get("model_id", ""), int(obj.get("seed", 0)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"bad variant record: {e}", line=n) from e
        try:
            rank = int(rank_s)
        except ValueError:
            raise ParseError(f"non-integer rank {rank_s!r}", line=n) from None
        expected = len(rows.get(topic, [])) + 1
        if rank != expected:
            raise ValidationError(f"topic {topic}: expected rank {expected}, found {rank}", line=n)
        if not query:
            raise ValidationError(f"topic {topic}: empty query at rank {rank}", line=n)
        rows.setdefault(topic, []).append(query)
        provenance.setdefault(topic, prov)
    return [QueryVariantSet(t, *provenance[t], queries=tuple(qs)) for t, qs in rows.items()]


# ---------------------------------------------------------------- corpus


def read_corpus(path) -> Iterator[Document]:
    """Stream documents from JSON lines with ``doc_id``, ``text`` and optional ``title``.

    To use a licensed TREC collection, convert its native markup to this format
    first; see the README for a recipe.
    """
    try:
        f = open(path, encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read corpus {path}: {e.strerror or e}") from e
    with f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                yield Document(str(obj["doc_id"]), obj.get("text") or "", obj.get("title"))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"{path}: bad document record: {e}", line=n) from e


def write_corpus(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in docs:
            obj = {"doc_id": d.doc_id, "text": d.text}
            if d.title:
                obj["title"] = d.title
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")
