"""Experiment configuration: one TOML file plus ``section.key=value`` overrides.

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from qvfuse.analyzer import STEMMERS, AnalyzerConfig, read_stopwords
from qvfuse.errors import ConfigError
from qvfuse.fusion import RrfParams
from qvfuse.metrics import get_measure
from qvfuse.querygen import STRATEGIES
from qvfuse.retrieval import Bm25Params, Rm3Params


@dataclass
class PathsConfig:
    corpus: Path | None = None
    topics: Path | None = None
    qrels: Path | None = None
    output: Path = Path("qvfuse-out")


@dataclass
class AnalyzerSection:
    lowercase: bool = True
    stemmer: str = "porter"
    stopwords: Path | None = None  # None: bundled English list


@dataclass
class GenerationConfig:
    backend: str = "stub"  # "stub" or "openai"
    strategies: list[str] = field(default_factory=lambda: ["P1", "P2", "P3"])
    n: int = 100
    temperature: float = 0.0
    seed: int = 42
    model: str = "gpt-4o"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    system_role: bool = False
    examples: Path | None = None
    max_concurrency: int = 4
    max_retries: int = 5
    cache_dir: Path | None = None  # None: <output>/cache


@dataclass
class FusionConfig:
    k: float = 60.0
    cutoff: int = 1000
    m: list[int] = field(default_factory=lambda: [3, 5, 10, 100])


@dataclass
class EvaluationConfig:
    metrics: list[str] = field(default_factory=lambda: ["P@10", "nDCG@10", "Bpref", "MAP"])
    alpha: float = 0.05
    delta_metric: str = "nDCG@1000"


@dataclass
class ExperimentConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    analyzer: AnalyzerSection = field(default_factory=AnalyzerSection)
    bm25: dict = field(default_factory=dict)
    rm3: dict = field(default_factory=dict)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    workers: int = 1

    @property
    def bm25_params(self) -> Bm25Params:
        return Bm25Params(**self.bm25)

    @property
    def rm3_params(self) -> Rm3Params:
        return Rm3Params(**self.rm3)

    @property
    def rrf_params(self) -> RrfParams:
        return RrfParams(k=float(self.fusion.k), cutoff=self.fusion.cutoff)

    def analyzer_config(self) -> AnalyzerConfig:
        a = self.analyzer
        kwargs: dict[str, Any] = {"lowercase": a.lowercase, "stemmer": a.stemmer}
        if a.stopwords is not None:
            kwargs["stopwords"] = read_stopwords(a.stopwords)
        return AnalyzerConfig(**kwargs)

    @property
    def cache_dir(self) -> Path:
        return self.generation.cache_dir or self.paths.output / "cache"

    def validate(self, require_inputs: bool = True) -> None:
        """Raise :class:`ConfigError` listing every violation found."""
        problems = []
        if require_inputs:
            for name in ("corpus", "topics", "qrels"):
                p = getattr(self.paths, name)
                if p is None:
                    problems.append(f"paths.{name} is not set")
                elif not p.exists():
                    problems.append(f"paths.{name} does not exist: {p}")
        if self.analyzer.stemmer not in STEMMERS:
            problems.append(f"analyzer.stemmer must be one of {STEMMERS}, got {self.analyzer.stemmer!r}")
        if self.analyzer.stopwords is not None and not self.analyzer.stopwords.exists():
            problems.append(f"analyzer.stopwords does not exist: {self.analyzer.stopwords}")
        for label, build in (("bm25", lambda: self.bm25_params), ("rm3", lambda: self.rm3_params), ("fusion", lambda: self.rrf_params)):
            try:
                build()
            except (TypeError, ValueError) as e:
                problems.append(f"{label}: {e}")
        g = self.generation
        if g.backend not in ("stub", "openai"):
            problems.append(f"generation.backend must be 'stub' or 'openai', got {g.backend!r}")
        if not g.strategies:
            problems.append("generation.strategies is empty")
        for s in g.strategies:
            if s not in STRATEGIES:
                problems.append(f"generation.strategies: unknown strategy {s!r}")
        if g.n < 1:
            problems.append(f"generation.n must be >= 1, got {g.n}")
        if g.examples is not None and not g.examples.exists():
            problems.append(f"generation.examples does not exist: {g.examples}")
        if not self.fusion.m:
            problems.append("fusion.m is empty")
        for m in self.fusion.m:
            if not isinstance(m, int) or m < 1:
                problems.append(f"fusion.m values must be integers >= 1, got {m!r}")
            elif m > g.n:
                problems.append(f"fusion.m value {m} exceeds generation.n = {g.n}")
        for name in [*self.evaluation.metrics, self.evaluation.delta_metric]:
            try:
                get_measure(name)
            except ValueError as e:
                problems.append(f"evaluation: {e}")
        if self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if problems:
            raise ConfigError(problems)


_SECTIONS = {
    "paths": PathsConfig,
    "analyzer": AnalyzerSection,
    "generation": GenerationConfig,
    "fusion": FusionConfig,
    "evaluation": EvaluationConfig,
}
_PATH_KEYS = {
    ("paths", "corpus"),
    ("paths", "topics"),
    ("paths", "qrels"),
    ("paths", "output"),
    ("analyzer", "stopwords"),
    ("generation", "examples"),
    ("generation", "cache_dir"),
}


def parse_override(text: str) -> tuple[list[str], Any]:
    """``section.key=value`` with ``value`` read as a TOML value (bare words are strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip().split("."), value


def config_from_dict(data: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    problems = []
    cfg = ExperimentConfig()
    for section, value in data.items():
        if section == "workers":
            cfg.workers = value
        elif section in ("bm25", "rm3"):
            if not isinstance(value, dict):
                problems.append(f"[{section}] must be a table")
                continue
            getattr(cfg, section).update(value)
        elif section in _SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"[{section}] must be a table")
                continue
            target = getattr(cfg, section)
            known = {f.name for f in fields(target)}
            for key, v in value.items():
                if key not in known:
                    problems.append(f"unknown key {section}.{key}")
                    continue
                if (section, key) in _PATH_KEYS:
                    v = None if v in ("", None) else (base_dir / Path(v))
                setattr(target, key, v)
        else:
            problems.append(f"unknown section [{section}]")
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str | Path | None, overrides: list[str] = ()) -> ExperimentConfig:
    data: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text("utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        base_dir = path.resolve().parent
    for item in overrides:
        keys, value = parse_override(item)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    # overrides name paths relative to the working directory
    cfg = config_from_dict(data, base_dir)
    for item in overrides:
        keys, value = parse_override(item)
        if len(keys) == 2 and tuple(keys) in _PATH_KEYS and value not in ("", None):
            setattr(getattr(cfg, keys[0]), keys[1], Path(value).resolve())
    return cfg


def render_default_config(corpus="corpus.jsonl", topics="topics.jsonl", qrels="qrels.txt", output="out") -> str:
    """A complete config file with every setting at its default value."""
    return f"""\
# qvfuse experiment configuration
workers = 1

[paths]
corpus = "{corpus}"
topics = "{topics}"
qrels = "{qrels}"
output = "{output}"

[analyzer]
lowercase = true
stemmer = "porter"      # "porter" or "none"
# stopwords = "my-stopwords.txt"

[bm25]
k1 = 1.2
b = 0.75
depth = 1000

[rm3]
fb_docs = 10
fb_terms = 10
orig_weight = 0.5

[generation]
backend = "stub"        # "stub" (offline) or "openai"
strategies = ["P1", "P2", "P3"]
n = 100
temperature = 0.0
seed = 42
model = "gpt-4o"
base_url = "https://api.openai.com/v1"
api_key_env = "OPENAI_API_KEY"
system_role = false
max_concurrency = 4
max_retries = 5
# examples = "p3-examples.json"

[fusion]
k = 60
cutoff = 1000
m = [3, 5, 10, 100]

[evaluation]
metrics = ["P@10", "nDCG@10", "Bpref", "MAP"]
alpha = 0.05
delta_metric = "nDCG@1000"
"""
