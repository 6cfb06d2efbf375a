"""Command line interface: one subcommand per pipeline stage.

Output layout under ``paths.output``::

    index/index.bin
    variants/<strategy>.jsonl, <strategy>.tsv
    runs/bm25.run, runs/bm25-rm3.run, runs/<strategy>/v001.run ...
    fused/<strategy>-rrf<k>-m<m>.run
    eval/report.txt, eval/report.jsonl
    analysis/delta-<strategy>-m<m>.tsv, analysis/summary.tsv

Each stage directory gets a ``.complete`` marker holding a fingerprint of the
stage settings and of its upstream markers. A stage whose marker matches is
skipped unless ``--force`` is given.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from qvfuse import fusion, index as index_mod, metrics, querygen, retrieval, trecio
from qvfuse.config import ExperimentConfig, load_config, render_default_config
from qvfuse.errors import MissingStageError, QVFuseError
from qvfuse.synthfixture import SynthSpec, generate_collection
from qvfuse.types import Ranking, Topic

log = logging.getLogger("qvfuse")
T = TypeVar("T")
R = TypeVar("R")

BASELINE = "bm25"
BASELINE_RM3 = "bm25-rm3"
MARKERS = {BASELINE: "*", BASELINE_RM3: "+"}
STAGES = ("index", "generate", "retrieve", "fuse", "evaluate", "analyze")
UPSTREAM = {
    "index": (),
    "generate": (),
    "retrieve": ("index", "generate"),
    "fuse": ("retrieve",),
    "evaluate": ("fuse",),
    "analyze": ("fuse",),
}


# ---------------------------------------------------------------- stage bookkeeping


def stage_dir(cfg: ExperimentConfig, stage: str) -> Path:
    name = {"retrieve": "runs", "fuse": "fused", "evaluate": "eval", "generate": "variants", "analyze": "analysis"}.get(stage, stage)
    return cfg.paths.output / name


def _digest(path: Path | None) -> str | None:
    """Content hash of an input file, so edited inputs invalidate their stages."""
    if path is None or not path.exists():
        return None
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_params(cfg: ExperimentConfig, stage: str) -> dict:
    g = cfg.generation
    paths = cfg.paths
    if stage == "index":
        return {"analyzer": cfg.analyzer_config().to_dict(), "corpus": _digest(paths.corpus)}
    if stage == "generate":
        return {
            "topics": _digest(paths.topics),
            "backend": g.backend,
            "strategies": g.strategies,
            "n": g.n,
            "temperature": g.temperature,
            "seed": g.seed,
            "model": g.model if g.backend != "stub" else "stub",
            "system_role": g.system_role,
            "examples": [asdict(e) for e in querygen.load_examples(g.examples)] if "P3" in g.strategies else None,
        }
    if stage == "retrieve":
        return {
            "bm25": asdict(cfg.bm25_params),
            "rm3": asdict(cfg.rm3_params),
            "strategies": g.strategies,
            "topics": _digest(paths.topics),
        }
    if stage == "fuse":
        return {"rrf": asdict(cfg.rrf_params), "m": cfg.fusion.m, "strategies": g.strategies}
    if stage == "evaluate":
        return {"metrics": cfg.evaluation.metrics, "alpha": cfg.evaluation.alpha, "qrels": _digest(paths.qrels)}
    if stage == "analyze":
        return {"delta_metric": cfg.evaluation.delta_metric, "qrels": _digest(paths.qrels)}
    raise ValueError(stage)


def _marker(cfg: ExperimentConfig, stage: str) -> Path:
    return stage_dir(cfg, stage) / ".complete"


def fingerprint(cfg: ExperimentConfig, stage: str) -> str:
    parts = {"stage": stage, "params": _stage_params(cfg, stage)}
    for up in UPSTREAM[stage]:
        marker = _marker(cfg, up)
        if not marker.exists():
            raise MissingStageError(up, stage_dir(cfg, up))
        parts[up] = marker.read_text("utf-8").strip()
    blob = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _should_run(cfg: ExperimentConfig, stage: str, force: bool) -> str | None:
    """Fingerprint to record if the stage must run, else None."""
    fp = fingerprint(cfg, stage)
    marker = _marker(cfg, stage)
    if not force and marker.exists() and marker.read_text("utf-8").strip() == fp:
        log.info("%s: up to date, skipped", stage)
        return None
    out = stage_dir(cfg, stage)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    log.info("%s: running", stage)
    return fp


def _finish(cfg: ExperimentConfig, stage: str, fp: str) -> None:
    _marker(cfg, stage).write_text(fp + "\n", encoding="utf-8")


def _pmap(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _topics(cfg: ExperimentConfig) -> list[Topic]:
    return trecio.parse_topics(cfg.paths.topics)


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingStageError(stage, path)
    return path


# ---------------------------------------------------------------- stages


def cmd_index(cfg: ExperimentConfig, force: bool = False) -> Path:
    path = stage_dir(cfg, "index") / "index.bin"
    fp = _should_run(cfg, "index", force)
    if fp is None:
        return path
    idx = index_mod.build(trecio.read_corpus(cfg.paths.corpus), cfg.analyzer_config())
    index_mod.save(idx, path)
    log.info("index: %d documents, %d terms", idx.num_docs, len(idx.vocabulary))
    _finish(cfg, "index", fp)
    return path


def make_client(cfg: ExperimentConfig) -> querygen.ChatClient:
    g = cfg.generation
    if g.backend == "stub":
        return querygen.StubClient(cfg.analyzer_config())
    return querygen.ChatCompletionClient(
        model_id=g.model,
        base_url=g.base_url,
        api_key_env=g.api_key_env,
        max_retries=g.max_retries,
        cache=querygen.ResponseCache(cfg.cache_dir),
    )


def cmd_generate(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = stage_dir(cfg, "generate")
    fp = _should_run(cfg, "generate", force)
    if fp is None:
        return out
    g = cfg.generation
    topics = _topics(cfg)
    client = make_client(cfg)
    for name in g.strategies:
        strategy = querygen.PromptStrategy.named(name, g.examples)
        sets = querygen.generate_all(
            client,
            topics,
            strategy,
            g.n,
            max_workers=g.max_concurrency,
            seed=g.seed,
            temperature=g.temperature,
            system_role=g.system_role,
        )
        trecio.write_variants(sets, out / f"{name}.jsonl")
        trecio.write_variants(sets, out / f"{name}.tsv")
        log.info("generate: %s, %d topics", name, len(sets))
    _finish(cfg, "generate", fp)
    return out


def variant_run_path(cfg: ExperimentConfig, strategy: str, i: int) -> Path:
    return stage_dir(cfg, "retrieve") / strategy / f"v{i:03d}.run"


def cmd_retrieve(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = stage_dir(cfg, "retrieve")
    index_path = _require(stage_dir(cfg, "index") / "index.bin", "index")
    fp = _should_run(cfg, "retrieve", force)
    if fp is None:
        return out
    idx = index_mod.load(index_path)
    topics = _topics(cfg)
    bm25, rm3 = cfg.bm25_params, cfg.rm3_params
    workers = cfg.workers

    base = _pmap(lambda t: retrieval.search(idx, t.title, bm25, topic_id=t.topic_id, tag=BASELINE), topics, workers)
    trecio.write_run(base, out / f"{BASELINE}.run")
    with_fb = _pmap(
        lambda t: retrieval.search_rm3(idx, t.title, rm3, bm25, topic_id=t.topic_id, tag=BASELINE_RM3), topics, workers
    )
    trecio.write_run(with_fb, out / f"{BASELINE_RM3}.run")

    for name in cfg.generation.strategies:
        sets = {vs.topic_id: vs for vs in trecio.parse_variants(_require(stage_dir(cfg, "generate") / f"{name}.jsonl", "generate"))}
        depth = max((len(vs.queries) for vs in sets.values()), default=0)
        (out / name).mkdir()
        for i in range(1, depth + 1):
            tag = f"{name}-v{i}"
            todo = [t for t in topics if t.topic_id in sets and len(sets[t.topic_id].queries) >= i]
            rankings = _pmap(
                lambda t: retrieval.search(idx, sets[t.topic_id].queries[i - 1], bm25, topic_id=t.topic_id, tag=tag),
                todo,
                workers,
            )
            trecio.write_run(rankings, variant_run_path(cfg, name, i), tag=tag)
        log.info("retrieve: %s, %d variant runs", name, depth)
    _finish(cfg, "retrieve", fp)
    return out


def cmd_fuse(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = stage_dir(cfg, "fuse")
    fp = _should_run(cfg, "fuse", force)
    if fp is None:
        return out
    topics = _topics(cfg)
    params = cfg.rrf_params
    for name in cfg.generation.strategies:
        counts = {
            vs.topic_id: len(vs.queries)
            for vs in trecio.parse_variants(_require(stage_dir(cfg, "generate") / f"{name}.jsonl", "generate"))
        }
        max_m = max(cfg.fusion.m)
        variant_runs = []
        for i in range(1, max_m + 1):
            path = variant_run_path(cfg, name, i)
            variant_runs.append(trecio.parse_run(path) if path.exists() else {})
        for m in cfg.fusion.m:
            tag = fusion.fusion_tag(name, m, params.k)
            fused = []
            for t in topics:
                available = counts.get(t.topic_id, 0)
                if available == 0:
                    continue
                if available < m:
                    warnings.warn(f"{tag}: topic {t.topic_id} has only {available} variants; fusing those")
                rankings = [
                    variant_runs[i].get(t.topic_id) or Ranking(t.topic_id, f"{name}-v{i + 1}", [])
                    for i in range(min(m, available))
                ]
                fused.append(fusion.fuse_first_m(rankings, len(rankings), params, tag=tag))
            trecio.write_run(fused, out / f"{tag}.run", tag=tag)
    _finish(cfg, "fuse", fp)
    return out


def fused_run_names(cfg: ExperimentConfig) -> list[str]:
    return [fusion.fusion_tag(s, m, cfg.rrf_params.k) for s in cfg.generation.strategies for m in cfg.fusion.m]


def load_runs(cfg: ExperimentConfig) -> dict[str, dict[str, Ranking]]:
    runs = {}
    for name in (BASELINE, BASELINE_RM3):
        runs[name] = trecio.parse_run(_require(stage_dir(cfg, "retrieve") / f"{name}.run", "retrieve"))
    for name in fused_run_names(cfg):
        runs[name] = trecio.parse_run(_require(stage_dir(cfg, "fuse") / f"{name}.run", "fuse"))
    return runs


def _eval_topics(cfg: ExperimentConfig, qrels) -> list[str]:
    return [t.topic_id for t in _topics(cfg) if t.topic_id in qrels]


def cmd_evaluate(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = stage_dir(cfg, "evaluate")
    fp = _should_run(cfg, "evaluate", force)
    if fp is None:
        return out
    qrels = trecio.parse_qrels(cfg.paths.qrels)
    topic_ids = _eval_topics(cfg, qrels)
    runs = load_runs(cfg)
    table: dict[str, dict[str, metrics.MetricReport]] = {}
    for run_name, run in runs.items():
        table[run_name] = {
            m: metrics.evaluate(run, qrels, m, topics=topic_ids, run_name=run_name) for m in cfg.evaluation.metrics
        }
    for run_name, by_metric in table.items():
        baselines = {BASELINE: (), BASELINE_RM3: (BASELINE,)}.get(run_name, (BASELINE, BASELINE_RM3))
        for baseline in baselines:
            for m, rep in by_metric.items():
                base = table[baseline][m].per_topic
                if len(set(base) & set(rep.per_topic)) < 2:
                    continue
                t, p = metrics.paired_test(rep.per_topic, base)
                rep.significance.append(metrics.Significance(baseline, p, t_statistic=t))
    text = metrics.format_table(table, cfg.evaluation.metrics, MARKERS, cfg.evaluation.alpha)
    (out / "report.txt").write_text(text, encoding="utf-8")
    metrics.write_report_jsonl([rep for by in table.values() for rep in by.values()], out / "report.jsonl")
    _finish(cfg, "evaluate", fp)
    return out


def cmd_analyze(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = stage_dir(cfg, "analyze")
    fp = _should_run(cfg, "analyze", force)
    if fp is None:
        return out
    qrels = trecio.parse_qrels(cfg.paths.qrels)
    topic_ids = _eval_topics(cfg, qrels)
    metric = cfg.evaluation.delta_metric
    runs = load_runs(cfg)
    base = metrics.evaluate(runs[BASELINE], qrels, metric, topics=topic_ids).per_topic
    summary = ["strategy\tm\tmean_delta\timproved\tunchanged\tworse"]
    for s in cfg.generation.strategies:
        for m in cfg.fusion.m:
            name = fusion.fusion_tag(s, m, cfg.rrf_params.k)
            fused = metrics.evaluate(runs[name], qrels, metric, topics=topic_ids).per_topic
            d = metrics.deltas(fused, base)
            metrics.write_delta_tsv(d, out / f"delta-{s}-m{m}.tsv")
            vals = [x for _, x in d]
            summary.append(
                f"{s}\t{m}\t{sum(vals) / len(vals):.6f}\t{sum(v > 0 for v in vals)}"
                f"\t{sum(v == 0 for v in vals)}\t{sum(v < 0 for v in vals)}"
            )
    (out / "summary.tsv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    _finish(cfg, "analyze", fp)
    return out


COMMANDS: dict[str, Callable[[ExperimentConfig, bool], Path]] = {
    "index": cmd_index,
    "generate": cmd_generate,
    "retrieve": cmd_retrieve,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def cmd_experiment(cfg: ExperimentConfig, force: bool = False) -> Path:
    for stage in STAGES:
        COMMANDS[stage](cfg, force)
    return cfg.paths.output


# ---------------------------------------------------------------- synth / init


def cmd_synth(directory: Path, spec: SynthSpec) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    col = generate_collection(spec)
    trecio.write_corpus(col.docs, directory / "corpus.jsonl")
    trecio.write_topics_jsonl(col.topics, directory / "topics.jsonl")
    trecio.write_qrels(col.qrels, directory / "qrels.txt")
    config = directory / "config.toml"
    if not config.exists():
        config.write_text(render_default_config(), encoding="utf-8")


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvfuse", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    stage_help = {
        "index": "build the inverted index",
        "generate": "generate query variants per strategy",
        "retrieve": "retrieve per-variant runs and the BM25 / BM25+RM3 baselines",
        "fuse": "fuse the first m variant runs with RRF for each m",
        "evaluate": "evaluate all runs with significance tests",
        "analyze": "per-topic delta TSVs of fused runs against BM25",
        "experiment": "run every stage in order",
    }
    for name, help_ in stage_help.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("-c", "--config", type=Path, help="TOML config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
        p.add_argument("--force", action="store_true", help="rerun even if outputs are up to date")
        p.add_argument("--output", type=Path, help="output directory (overrides paths.output)")
        p.add_argument("--workers", type=int, help="parallel retrieval workers")
        p.add_argument("--backend", choices=["stub", "openai"], help="query generator backend")
        p.add_argument("--strategy", action="append", choices=list(querygen.STRATEGIES), help="repeatable")

    p = sub.add_parser("synth", help="write a synthetic collection and a default config")
    p.add_argument("directory", type=Path)
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--docs-per-topic", type=int, default=100)
    p.add_argument("--relevant", type=int, default=10)
    p.add_argument("--vocab", type=int, default=5000)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("init-config", help="print a config file with all defaults")
    return parser


def _apply_flags(args) -> list[str]:
    overrides = list(args.overrides)
    if args.output is not None:
        overrides.append(f"paths.output={json.dumps(str(args.output))}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.backend is not None:
        overrides.append(f"generation.backend={json.dumps(args.backend)}")
    if args.strategy:
        overrides.append(f"generation.strategies={json.dumps(args.strategy)}")
    return overrides


def main(argv: Iterable[str] | None = None) -> int:
    args = build_parser().parse_args(None if argv is None else list(argv))
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)
    try:
        if args.command == "init-config":
            sys.stdout.write(render_default_config())
            return 0
        if args.command == "synth":
            spec = SynthSpec(args.topics, args.docs_per_topic, args.relevant, args.vocab, args.noise, args.seed)
            cmd_synth(args.directory, spec)
            return 0
        cfg = load_config(args.config, _apply_flags(args))
        cfg.validate()
        if args.command == "experiment":
            cmd_experiment(cfg, args.force)
        else:
            COMMANDS[args.command](cfg, args.force)
        return 0
    except QVFuseError as e:
        print(f"qvfuse: {e.category} error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"qvfuse: io error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        # remaining ValueErrors come from input data (duplicate doc ids, bad topics...)
        print(f"qvfuse: parse error: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
