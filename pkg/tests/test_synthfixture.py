import pytest

from qvfuse.analyzer import AnalyzerConfig, analyze
from qvfuse.index import build
from qvfuse.metrics import evaluate
from qvfuse.retrieval import search
from qvfuse.synthfixture import SynthSpec, generate_collection

SMALL = SynthSpec(num_topics=5, docs_per_topic=40, relevant_per_topic=10, vocab_size=2000, seed=3)


@pytest.fixture(scope="module")
def small():
    return generate_collection(SMALL)


def test_deterministic(small):
    again = generate_collection(SMALL)
    assert again.docs == small.docs
    assert again.topics == small.topics
    assert again.qrels == small.qrels


def test_seed_changes_collection(small):
    other = generate_collection(SynthSpec(**{**SMALL.__dict__, "seed": 4}))
    assert other.docs != small.docs


def test_counts(small):
    # 5 topics x 40 docs = 200 documents, 10 relevant each
    assert len(small.docs) == 200
    assert len({d.doc_id for d in small.docs}) == 200
    assert sum(1 for j in small.qrels.values() for g in j.values() if g > 0) == 50
    assert all(g in (0, 1, 2) for j in small.qrels.values() for g in j.values())


def test_title_terms_strict_subset(small):
    cfg = AnalyzerConfig()
    for topic in small.topics:
        title = set(analyze(cfg, topic.title))
        rich = set(analyze(cfg, f"{topic.title} {topic.description} {topic.narrative}"))
        latent = set(analyze(cfg, " ".join(small.latent[topic.topic_id])))
        assert title < (rich & latent)


def test_title_bm25_is_neither_trivial_nor_impossible(small):
    idx = build(small.docs)
    run = {t.topic_id: search(idx, t.title, topic_id=t.topic_id) for t in small.topics}
    mean = evaluate(run, small.qrels, "nDCG@10").aggregate
    assert 0.05 < mean < 0.95


def test_vocabulary_too_small():
    with pytest.raises(ValueError, match="too small"):
        generate_collection(SynthSpec(num_topics=50, vocab_size=300))


@pytest.mark.parametrize(
    "kwargs",
    [{"num_topics": 0}, {"docs_per_topic": 0}, {"relevant_per_topic": 11, "docs_per_topic": 10}, {"noise": 2.0}],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SynthSpec(**kwargs)
