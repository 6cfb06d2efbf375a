import random

import pytest
from hypothesis import given, strategies as st

from qvfuse.fusion import RrfParams, fuse_first_m, fusion_tag, rrf_fuse
from qvfuse.types import Ranking


def R(docs, topic="1"):
    return Ranking(topic, "run", [(d, float(len(docs) - i)) for i, d in enumerate(docs)])


def naive_rrf(lists, k=60.0):
    """Double loop straight from the definition, no shortcuts."""
    all_docs = sorted({d for lst in lists for d in lst})
    scores = {}
    for d in all_docs:
        s = 0.0
        for lst in lists:
            for rank in range(1, len(lst) + 1):
                if lst[rank - 1] == d:
                    s += 1.0 / (k + rank)
        scores[d] = s
    return scores


doc_lists = st.lists(
    st.lists(st.sampled_from("ABCDEF"), max_size=6, unique=True), min_size=1, max_size=4
)


def test_single_ranking():
    out = rrf_fuse([R("ABC")])
    assert out.doc_ids == ["A", "B", "C"]
    assert [s for _, s in out.entries] == [1 / 61, 1 / 62, 1 / 63]


def test_swapped_pair_ties_by_doc_id():
    out = rrf_fuse([R("AB"), R("BA")])
    assert out.doc_ids == ["A", "B"]
    a, b = (s for _, s in out.entries)
    assert a == b
    assert a == pytest.approx(1 / 61 + 1 / 62, abs=1e-12)
    # 0.0325225 exactly; a rounded 0.0325185 figure is an arithmetic slip
    assert a == pytest.approx(0.0325225, abs=1e-7)


def test_partial_overlap():
    out = rrf_fuse([R("ABC"), R("B")])
    assert out.doc_ids == ["B", "A", "C"]
    assert dict(out.entries)["B"] == pytest.approx(0.032523, abs=1e-6)
    assert dict(out.entries)["A"] == pytest.approx(0.016393, abs=1e-6)


def test_empty_list_rejected():
    with pytest.raises(ValueError):
        rrf_fuse([])


def test_mixed_topics_rejected():
    with pytest.raises(ValueError, match="different topics"):
        rrf_fuse([R("AB", "1"), R("AB", "2")])


def test_cutoff():
    assert len(rrf_fuse([R("ABCDEF")], RrfParams(cutoff=2))) == 2


def test_params_validation():
    with pytest.raises(ValueError):
        RrfParams(k=-1)
    with pytest.raises(ValueError):
        RrfParams(cutoff=0)


def test_tag():
    assert fusion_tag("P2", 10, 60.0) == "P2-rrf60-m10"
    assert rrf_fuse([R("A")], tag="x").system_tag == "x"
    assert rrf_fuse([R("A")]).system_tag == "rrf60"


def test_fuse_first_m():
    rankings = [R("AB"), R("BA"), R("CA")]
    assert fuse_first_m(rankings, 1).doc_ids == ["A", "B"]
    assert fuse_first_m(rankings, 2).entries == rrf_fuse(rankings[:2]).entries
    assert fuse_first_m(rankings, 3).entries == rrf_fuse(rankings).entries


def test_fuse_first_m_uses_only_prefix():
    rankings = [R([f"d{i}"]) for i in range(100)]
    assert sorted(fuse_first_m(rankings, 10).doc_ids) == sorted(f"d{i}" for i in range(10))


@pytest.mark.parametrize("m", [0, 4])
def test_fuse_first_m_range(m):
    with pytest.raises(ValueError):
        fuse_first_m([R("A"), R("B"), R("C")], m)


def test_empty_input_rankings():
    assert len(rrf_fuse([R(""), R("")])) == 0


@given(doc_lists, st.floats(0, 100))
def test_matches_naive(lists, k):
    out = rrf_fuse([R(lst) for lst in lists], RrfParams(k=k))
    want = naive_rrf(lists, k)
    assert set(out.doc_ids) == set(want)
    for d, s in out.entries:
        assert abs(s - want[d]) <= 1e-12
        assert s > 0
    order = sorted(want, key=lambda d: (-want[d], d))
    got = dict(out.entries)
    assert [got[d] for d in out.doc_ids] == sorted(got.values(), reverse=True)
    assert len(out) == len(order)


@given(doc_lists, st.randoms(use_true_random=False))
def test_permutation_invariant(lists, rnd):
    rankings = [R(lst) for lst in lists]
    shuffled = rankings[:]
    rnd.shuffle(shuffled)
    assert rrf_fuse(shuffled).entries == rrf_fuse(rankings).entries


@given(doc_lists, st.integers(0, 2**32 - 1))
def test_reads_ranks_only(lists, seed):
    rnd = random.Random(seed)
    rescored = []
    for lst in lists:
        scores = sorted((rnd.uniform(-1e6, 1e6) for _ in lst), reverse=True)
        scores = [s + (len(lst) - i) * 1e-3 for i, s in enumerate(scores)]
        rescored.append(Ranking("1", "x", list(zip(lst, scores))))
    assert rrf_fuse(rescored).entries == rrf_fuse([R(lst) for lst in lists]).entries
