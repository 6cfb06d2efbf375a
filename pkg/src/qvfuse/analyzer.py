"""Text analysis: tokenize on alphanumeric runs, lowercase, drop stopwords, stem."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

TOKEN_RE = re.compile(r"[^\W_]+")
STEMMERS = ("none", "porter")
DEFAULT_STOPWORDS_FILE = "stopwords-en.txt"


def read_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read a stopword file: one word per line, ``#`` starts a comment."""
    if path is None:
        text = resources.files("qvfuse.data").joinpath(DEFAULT_STOPWORDS_FILE).read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    words = set()
    for line in text.splitlines():
        word = line.split("#", 1)[0].strip()
        if word:
            words.add(word.lower())
    return frozenset(words)


def default_stopwords_sha256() -> str:
    data = resources.files("qvfuse.data").joinpath(DEFAULT_STOPWORDS_FILE).read_bytes()
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class AnalyzerConfig:
    lowercase: bool = True
    stopwords: frozenset[str] = field(default_factory=read_stopwords)
    stemmer: str = "porter"

    def __post_init__(self):
        if self.stemmer not in STEMMERS:
            raise ValueError(f"unknown stemmer {self.stemmer!r}; expected one of {STEMMERS}")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "stopwords": sorted(self.stopwords),
            "stemmer": self.stemmer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyzerConfig":
        return cls(lowercase=d["lowercase"], stopwords=frozenset(d["stopwords"]), stemmer=d["stemmer"])


@lru_cache(maxsize=1)
def _porter():
    # Original 1980 rules, without the NLTK extensions.
    from nltk.stem.porter import PorterStemmer

    return PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=200_000)
def porter_stem(word: str) -> str:
    return _porter().stem(word, to_lowercase=False)


class Analyzer:
    """Callable analysis chain for one :class:`AnalyzerConfig`."""

    def __init__(self, config: AnalyzerConfig | None = None):
        self.config = config or AnalyzerConfig()
        self._stem = porter_stem if self.config.stemmer == "porter" else None

    def tokens(self, text: str) -> list[str]:
        """Tokenize, case-fold and drop stopwords, but do not stem."""
        toks = TOKEN_RE.findall(text)
        if self.config.lowercase:
            toks = [t.lower() for t in toks]
        stop = self.config.stopwords
        return [t for t in toks if t not in stop]

    def __call__(self, text: str) -> list[str]:
        toks = self.tokens(text)
        if self._stem is not None:
            # the 1980 rules reduce a bare "s" to nothing; keep such tokens as is
            toks = [self._stem(t) or t for t in toks]
        return toks


@lru_cache(maxsize=16)
def _analyzer_for(config: AnalyzerConfig) -> Analyzer:
    return Analyzer(config)


def analyze(config: AnalyzerConfig, text: str) -> list[str]:
    return _analyzer_for(config)(text)
