"""Test-collection measures, paired significance testing and per-topic deltas.

Per-topic functions take a ranking (a :class:`Ranking` or a plain sequence of
doc ids, best first) and the judgments of that topic as ``{doc_id: grade}``.
Unjudged documents count as nonrelevant everywhere except in :func:`bpref`,
which ignores them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from scipy import stats

from qvfuse.errors import SkippedTopicWarning
from qvfuse.types import Ranking

Qrels = dict[str, dict[str, int]]


def _docs(ranking) -> list[str]:
    return ranking.doc_ids if isinstance(ranking, Ranking) else list(ranking)


def num_relevant(judgments: Mapping[str, int]) -> int:
    return sum(1 for g in judgments.values() if g > 0)


def precision_at(ranking, judgments: Mapping[str, int], k: int = 10) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(1 for d in _docs(ranking)[:k] if judgments.get(d, 0) > 0) / k


def ndcg_at(ranking, judgments: Mapping[str, int], k: int | None = 10) -> float:
    """nDCG with linear gain and log2(rank + 1) discount; ``k=None`` means no cutoff."""
    docs = _docs(ranking)
    if k is not None:
        docs = docs[:k]
    dcg = sum(max(judgments.get(d, 0), 0) / math.log2(i + 2) for i, d in enumerate(docs))
    ideal = sorted((g for g in judgments.values() if g > 0), reverse=True)
    if k is not None:
        ideal = ideal[:k]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0:
        raise ValueError("nDCG undefined for a topic without relevant documents")
    return dcg / idcg


def average_precision(ranking, judgments: Mapping[str, int], depth: int = 1000) -> float:
    r = num_relevant(judgments)
    if r == 0:
        raise ValueError("AP undefined for a topic without relevant documents")
    hits = 0
    total = 0.0
    for i, d in enumerate(_docs(ranking)[:depth], start=1):
        if judgments.get(d, 0) > 0:
            hits += 1
            total += hits / i
    return total / r


def bpref(ranking, judgments: Mapping[str, int]) -> float:
    r = num_relevant(judgments)
    if r == 0:
        raise ValueError("bpref undefined for a topic without relevant documents")
    n = sum(1 for g in judgments.values() if g <= 0)
    nonrel_above = 0
    total = 0.0
    for d in _docs(ranking):
        if d not in judgments:
            continue
        if judgments[d] > 0:
            total += 1.0 if n == 0 else 1.0 - min(nonrel_above, r) / min(r, n)
        else:
            nonrel_above += 1
    return total / r


@dataclass(frozen=True)
class Measure:
    name: str
    fn: Callable[..., float]
    needs_relevant: bool = True


MEASURES: dict[str, Measure] = {
    "P@10": Measure("P@10", lambda r, j: precision_at(r, j, 10), needs_relevant=False),
    "nDCG@10": Measure("nDCG@10", lambda r, j: ndcg_at(r, j, 10)),
    "nDCG@1000": Measure("nDCG@1000", lambda r, j: ndcg_at(r, j, 1000)),
    "Bpref": Measure("Bpref", bpref),
    "MAP": Measure("MAP", lambda r, j: average_precision(r, j, 1000)),
}
TABLE_MEASURES = ("P@10", "nDCG@10", "Bpref", "MAP")


def get_measure(name: str) -> Measure:
    if name.startswith("P@") and name not in MEASURES:
        k = int(name[2:])
        return Measure(name, lambda r, j: precision_at(r, j, k), needs_relevant=False)
    if name.startswith("nDCG@") and name not in MEASURES:
        k = int(name[5:])
        return Measure(name, lambda r, j: ndcg_at(r, j, k))
    try:
        return MEASURES[name]
    except KeyError:
        raise ValueError(f"unknown measure {name!r}") from None


@dataclass
class Significance:
    baseline: str
    p_value: float
    test: str = "paired t-test (two-sided)"
    t_statistic: float = 0.0


@dataclass
class MetricReport:
    metric: str
    run: str
    per_topic: dict[str, float]
    significance: list[Significance] = field(default_factory=list)

    @property
    def aggregate(self) -> float:
        if not self.per_topic:
            return 0.0
        return math.fsum(self.per_topic.values()) / len(self.per_topic)


def evaluate(
    run: Mapping[str, Ranking | Sequence[str]],
    qrels: Qrels,
    metric: str,
    topics: Iterable[str] | None = None,
    run_name: str = "",
) -> MetricReport:
    """Per-topic scores of ``run`` for one measure.

    ``topics`` fixes the evaluated set; topics missing from ``run`` then score as
    an empty ranking. By default the run's own topics are used. Topics without
    judgments (or without relevant documents, for measures that need them) are
    skipped with a :class:`SkippedTopicWarning`.
    """
    measure = get_measure(metric)
    topic_ids = list(run) if topics is None else list(topics)
    per_topic = {}
    skipped = []
    for tid in topic_ids:
        judged = qrels.get(tid)
        if judged is None or (measure.needs_relevant and num_relevant(judged) == 0):
            skipped.append(tid)
            continue
        per_topic[tid] = measure.fn(run.get(tid, []), judged)
    if skipped:
        warnings.warn(
            f"{metric}: skipped {len(skipped)} topic(s) without relevant judgments: {', '.join(skipped[:10])}",
            SkippedTopicWarning,
            stacklevel=2,
        )
    return MetricReport(metric, run_name, per_topic)


def paired_test(
    per_topic_a: Mapping[str, float], per_topic_b: Mapping[str, float], alternative: str = "two-sided"
) -> tuple[float, float]:
    """Paired Student's t-test on a - b over the common topics.

    ``alternative`` is ``"two-sided"``, ``"greater"`` (a > b) or ``"less"``.
    """
    common = sorted(set(per_topic_a) & set(per_topic_b))
    n = len(common)
    if n < 2:
        raise ValueError(f"paired test needs at least 2 common topics, got {n}")
    diffs = [per_topic_a[t] - per_topic_b[t] for t in common]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0:
        if mean == 0:
            return 0.0, 1.0
        t = math.copysign(math.inf, mean)
    else:
        t = mean / math.sqrt(var / n)
    dist = stats.t(df=n - 1)
    if alternative == "two-sided":
        p = 2 * dist.sf(abs(t))
    elif alternative == "greater":
        p = dist.sf(t)
    elif alternative == "less":
        p = dist.cdf(t)
    else:
        raise ValueError(f"unknown alternative {alternative!r}")
    return float(t), float(min(p, 1.0))


def delta_per_topic(
    run_fused: Mapping[str, Ranking],
    run_baseline: Mapping[str, Ranking],
    qrels: Qrels,
    metric: str = "nDCG@1000",
) -> list[tuple[str, float]]:
    """Per-topic ``fused - baseline`` differences, largest first (ties by topic id)."""
    fused = evaluate(run_fused, qrels, metric).per_topic
    base = evaluate(run_baseline, qrels, metric).per_topic
    return deltas(fused, base)


def deltas(per_topic_a: Mapping[str, float], per_topic_b: Mapping[str, float]) -> list[tuple[str, float]]:
    common = set(per_topic_a) & set(per_topic_b)
    if not common:
        raise ValueError("no common topics to compare")
    return sorted(((t, per_topic_a[t] - per_topic_b[t]) for t in common), key=lambda x: (-x[1], x[0]))


def write_delta_tsv(deltas_: Sequence[tuple[str, float]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for tid, d in deltas_:
            f.write(f"{tid}\t{d:.6f}\n")


def report_rows(reports: Sequence[MetricReport]) -> list[dict]:
    rows = []
    for rep in reports:
        for tid, value in rep.per_topic.items():
            rows.append({"run": rep.run, "metric": rep.metric, "topic": tid, "value": round(value, 6)})
        row = {"run": rep.run, "metric": rep.metric, "topic": "all", "value": round(rep.aggregate, 6)}
        if rep.significance:
            row["significance"] = [
                {"baseline": s.baseline, "p_value": round(s.p_value, 6), "t": round(s.t_statistic, 6), "test": s.test}
                for s in rep.significance
            ]
        rows.append(row)
    return rows


def write_report_jsonl(reports: Sequence[MetricReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in report_rows(reports):
            f.write(json.dumps(row, sort_keys=True) + "\n")


def format_table(
    table: Mapping[str, Mapping[str, MetricReport]],
    metrics: Sequence[str] = TABLE_MEASURES,
    markers: Mapping[str, str] | None = None,
    alpha: float = 0.05,
) -> str:
    """Aligned text table: one row per run, one column per measure.

    ``table[run][metric]`` is a report; ``markers`` maps a baseline run name to
    the symbol appended to a score significantly different from that baseline.
    """
    markers = markers or {}
    mark_width = sum(len(sym) for sym in markers.values())
    header = ["run", *metrics]
    lines = []
    for run, by_metric in table.items():
        cells = [run]
        for m in metrics:
            rep = by_metric.get(m)
            if rep is None:
                cells.append("-")
                continue
            marks = "".join(
                markers.get(s.baseline, "") for s in rep.significance if s.p_value < alpha
            )
            cells.append(f"{rep.aggregate:.4f}{marks.ljust(mark_width)}")
        lines.append(cells)
    widths = [max(len(str(row[i])) for row in [header, *lines]) for i in range(len(header))]
    out = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    out.append("  ".join("-" * w for w in widths))
    for row in lines:
        out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip())
    if markers:
        legend = ", ".join(f"{sym} p<{alpha:g} vs {base}" for base, sym in markers.items())
        out.append("")
        out.append(f"paired two-sided t-test: {legend}")
    return "\n".join(out) + "\n"
