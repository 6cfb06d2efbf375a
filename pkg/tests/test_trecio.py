import io
import json

import pytest
from hypothesis import given, strategies as st

from qvfuse.errors import FormatWarning, InputError, ParseError, ValidationError
from qvfuse.index import Document
from qvfuse.trecio import (
    escape_tsv,
    format_score,
    parse_qrels,
    parse_run,
    parse_topics,
    parse_variants,
    read_corpus,
    unescape_tsv,
    write_corpus,
    write_qrels,
    write_run,
    write_topics_jsonl,
    write_topics_trec,
    write_variants,
)
from qvfuse.types import QueryVariantSet, Ranking, Topic

CLASSIC = """\
<top>

<num> Number: 301
<title> International Organized Crime

<desc> Description:
Identify organizations that participate in international
criminal activity.

<narr> Narrative:
A relevant document must name at least one organization.

</top>

<top>
<num> Number: 302
<title> Poliomyelitis and Post-Polio
</top>
"""


# topics


def test_minimal_topic():
    assert parse_topics("<top><num>301<title>airbus subsidies</top>") == [Topic("301", "airbus subsidies")]


def test_classic_markup():
    t301, t302 = parse_topics(CLASSIC)
    assert t301 == Topic(
        "301",
        "International Organized Crime",
        "Identify organizations that participate in international criminal activity.",
        "A relevant document must name at least one organization.",
    )
    assert t302 == Topic("302", "Poliomyelitis and Post-Polio")


def test_closed_tags_and_crlf():
    text = "<top>\r\n<num>7</num>\r\n<title>a  b</title>\r\n<desc>c</desc>\r\n</top>\r\n"
    assert parse_topics(text) == [Topic("7", "a b", "c", "")]


def test_topic_label_prefix():
    assert parse_topics("<top><num>5<title> Topic: solar power</top>")[0].title == "solar power"


def test_missing_num_names_line():
    text = "<top>\n<num>1\n<title>a\n</top>\n\n<top>\n<title>no number\n</top>\n"
    with pytest.raises(ParseError, match="line 6.*without <num>"):
        parse_topics(text)


def test_missing_title():
    with pytest.raises(ParseError, match="topic 9 without <title>"):
        parse_topics("<top><num>9</top>")


def test_unterminated_block():
    with pytest.raises(ParseError, match="unterminated"):
        parse_topics("<top><num>1<title>x")


def test_topics_jsonl(tmp_path):
    topics = parse_topics(CLASSIC)
    write_topics_jsonl(topics, tmp_path / "t.jsonl")
    assert parse_topics(tmp_path / "t.jsonl") == topics


def test_topics_trec_writer(tmp_path):
    topics = parse_topics(CLASSIC)
    write_topics_trec(topics, tmp_path / "t.txt")
    assert parse_topics(str(tmp_path / "t.txt")) == topics


def test_topics_jsonl_errors():
    with pytest.raises(ParseError, match="line 2"):
        parse_topics('{"topic_id": 1, "title": "a"}\n{"topic_id": 2}\n')


def test_topics_from_file_object():
    assert parse_topics(io.StringIO("<top><num>1<title>x y</top>"))[0].title == "x y"


def test_missing_topics_file(tmp_path):
    with pytest.raises(InputError):
        parse_topics(tmp_path / "nope.txt")


# qrels


def test_qrels_line():
    assert parse_qrels("301 0 d1 1") == {"301": {"d1": 1}}


def test_qrels_empty():
    assert parse_qrels(io.StringIO("")) == {}


def test_qrels_duplicate_last_wins():
    with pytest.warns(FormatWarning, match="duplicate"):
        assert parse_qrels("1 0 d 1\n1 0 d 2\n") == {"1": {"d": 2}}


def test_qrels_bad_grade_line_number():
    with pytest.raises(ParseError, match="line 2"):
        parse_qrels("1 0 a 1\n1 0 b x\n")


def test_qrels_negative_grade():
    with pytest.raises(ParseError, match="negative"):
        parse_qrels("1 0 a -1\n")


def test_qrels_lenient():
    with pytest.warns(FormatWarning):
        assert parse_qrels("1 0 a 1\n1 0 b\n1 0 c x\n1 0 d 2\n", strict=False) == {"1": {"a": 1, "d": 2}}


def test_qrels_round_trip(tmp_path):
    q = {"2": {"a": 1}, "10": {"b": 0, "c": 2}}
    write_qrels(q, tmp_path / "q")
    assert (tmp_path / "q").read_text().splitlines()[0] == "2 0 a 1"
    assert parse_qrels(tmp_path / "q") == q


# runs


def test_six_column_line():
    run = parse_run("301 Q0 d1 1 12.5 tag")
    assert run["301"] == Ranking("301", "tag", [("d1", 12.5)])


def test_score_inversion_strict():
    with pytest.raises(ValidationError, match="inversion"):
        parse_run("1 Q0 a 1 1.0 t\n1 Q0 b 2 2.0 t\n")


def test_rank_gap_strict():
    with pytest.raises(ValidationError, match="expected rank 2"):
        parse_run("1 Q0 a 1 2.0 t\n1 Q0 b 3 1.0 t\n")


def test_duplicate_doc_strict():
    with pytest.raises(ValidationError, match="duplicate"):
        parse_run("1 Q0 a 1 2.0 t\n1 Q0 a 2 1.0 t\n")


def test_wrong_columns():
    with pytest.raises(ParseError, match="6 columns"):
        parse_run("1 Q0 a 1 2.0\n")


def test_lenient_repairs():
    text = "1 Q0 a 1 1.0 t\n1 Q0 b 2 3.0 t\n1 Q0 a 3 0.5 t\n"
    with pytest.warns(FormatWarning):
        run = parse_run(text, strict=False)
    assert run["1"].entries == [("b", 3.0), ("a", 1.0)]


def test_run_crlf():
    assert parse_run("1 Q0 a 1 1 t\r\n")["1"].doc_ids == ["a"]


def test_run_writer_format(tmp_path):
    write_run([Ranking("301", "sys", [("d1", 12.5), ("d2", 1 / 3)])], tmp_path / "r")
    assert (tmp_path / "r").read_bytes() == b"301 Q0 d1 1 12.5 sys\n301 Q0 d2 2 0.333333 sys\n"


def test_format_score():
    assert format_score(1234567.0) == "1.23457e+06"
    assert format_score(0.0) == "0"


doc_ids = st.from_regex(r"[A-Za-z0-9_.-]{1,10}", fullmatch=True)


@st.composite
def runs(draw):
    topics = draw(st.lists(st.from_regex(r"[0-9]{1,4}", fullmatch=True), min_size=1, max_size=4, unique=True))
    out = []
    for t in topics:
        docs = draw(st.lists(doc_ids, min_size=1, max_size=12, unique=True))
        scores = sorted(draw(st.lists(st.floats(-1e9, 1e9), min_size=len(docs), max_size=len(docs))), reverse=True)
        out.append(Ranking(t, "tag", list(zip(docs, scores))))
    return out


@given(runs())
def test_run_round_trip(rankings):
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "run.txt")
        write_run(rankings, path)
        parsed = parse_run(path)
    assert list(parsed) == [r.topic_id for r in rankings]
    for r in rankings:
        back = parsed[r.topic_id]
        assert back.system_tag == "tag"
        assert back.doc_ids == r.doc_ids
        assert [s for _, s in back.entries] == [float(format_score(s)) for _, s in r.entries]


# variants


def vset(topic, queries, strategy="P2"):
    return QueryVariantSet(topic, strategy, "gpt-4o", 42, tuple(queries))


def test_variants_jsonl_round_trip(tmp_path):
    sets = [vset("301", [f"query {i}" for i in range(100)]), vset("302", ["x"])]
    write_variants(sets, tmp_path / "v.jsonl")
    assert parse_variants(tmp_path / "v.jsonl") == sets


def test_variants_tsv_matches_jsonl(tmp_path):
    sets = [vset("301", ["a b", "c"]), vset("302", ["d"])]
    write_variants(sets, tmp_path / "v.jsonl")
    write_variants(sets, tmp_path / "v.tsv")
    triples = lambda ss: [(s.topic_id, i, q) for s in ss for i, q in enumerate(s.queries, 1)]
    assert triples(parse_variants(tmp_path / "v.tsv")) == triples(parse_variants(tmp_path / "v.jsonl"))
    assert parse_variants(tmp_path / "v.tsv")[0].model_id == ""


def test_tab_escaped(tmp_path):
    write_variants(vset("1", ["a\tb", "back\\slash\\t"]), tmp_path / "v.tsv")
    assert (tmp_path / "v.tsv").read_text() == "1\t1\ta\\tb\n1\t2\tback\\\\slash\\\\t\n"
    assert parse_variants(tmp_path / "v.tsv")[0].queries == ("a\tb", "back\\slash\\t")


def test_variant_rank_gap(tmp_path):
    (tmp_path / "v.tsv").write_text("1\t1\ta\n1\t3\tb\n")
    with pytest.raises(ValidationError, match="line 2"):
        parse_variants(tmp_path / "v.tsv")


def test_variant_bad_json(tmp_path):
    (tmp_path / "v.jsonl").write_text('{"topic_id": "1", "rank": 1}\n')
    with pytest.raises(ParseError):
        parse_variants(tmp_path / "v.jsonl")


@given(st.text())
def test_escape_round_trip(s):
    e = escape_tsv(s)
    assert "\t" not in e and "\n" not in e and "\r" not in e
    assert unescape_tsv(e) == s


queries_st = st.lists(st.text(min_size=1).filter(lambda s: s.strip()), min_size=1, max_size=10)


@given(st.lists(st.tuples(st.from_regex(r"[0-9]{1,3}", fullmatch=True), queries_st), min_size=1, max_size=4, unique_by=lambda x: x[0]),
       st.sampled_from(["tsv", "jsonl"]))
def test_variants_round_trip_property(data, fmt):
    import tempfile, os

    sets = [vset(t, qs) for t, qs in data]
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, f"v.{fmt}")
        write_variants(sets, path)
        back = parse_variants(path)
    if fmt == "jsonl":
        assert back == sets
    else:
        assert [(s.topic_id, s.queries) for s in back] == [(s.topic_id, s.queries) for s in sets]


# corpus


def test_corpus_round_trip(tmp_path):
    docs = [Document("a", "text one", "Title"), Document("b", "two")]
    write_corpus(docs, tmp_path / "c.jsonl")
    assert list(read_corpus(tmp_path / "c.jsonl")) == docs


def test_corpus_missing(tmp_path):
    with pytest.raises(InputError, match="nope.jsonl"):
        list(read_corpus(tmp_path / "nope.jsonl"))


def test_corpus_bad_line(tmp_path):
    (tmp_path / "c.jsonl").write_text(json.dumps({"doc_id": "a", "text": "x"}) + "\n{broken\n")
    with pytest.raises(ParseError, match="line 2"):
        list(read_corpus(tmp_path / "c.jsonl"))
