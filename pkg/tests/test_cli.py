import hashlib
import shutil
from pathlib import Path

import pytest

from qvfuse.cli import main
from qvfuse.config import load_config
from qvfuse.trecio import parse_run

FAST = ["--set", "generation.n=10", "--set", "fusion.m=[3, 10]", "--set", "generation.max_concurrency=1"]


def tree(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def collection(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", str(d), "--topics", "5", "--docs-per-topic", "40", "--vocab", "2000", "--seed", "1"]) == 0
    return d


def run(collection, out, *extra, command="experiment"):
    return main([command, "-c", str(collection / "config.toml"), "--output", str(out), *FAST, *extra])


@pytest.fixture(scope="module")
def finished(collection, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    assert run(collection, out) == 0
    return out


def test_synth_writes_inputs(collection):
    for name in ("corpus.jsonl", "topics.jsonl", "qrels.txt", "config.toml"):
        assert (collection / name).exists()


def test_smoke_outputs(finished):
    assert (finished / "index" / "index.bin").exists()
    for s in ("P1", "P2", "P3"):
        assert (finished / "variants" / f"{s}.jsonl").exists()
        assert (finished / "variants" / f"{s}.tsv").exists()
        assert (finished / "runs" / s / "v010.run").exists()
        for m in (3, 10):
            assert (finished / "fused" / f"{s}-rrf60-m{m}.run").exists()
            assert (finished / "analysis" / f"delta-{s}-m{m}.tsv").exists()
    assert (finished / "runs" / "bm25.run").exists()
    assert (finished / "runs" / "bm25-rm3.run").exists()
    report = (finished / "eval" / "report.txt").read_text()
    for col in ("P@10", "nDCG@10", "Bpref", "MAP"):
        assert col in report
    assert "P2-rrf60-m10" in report
    assert (finished / "eval" / "report.jsonl").exists()


def test_fused_run_tag(finished):
    run_ = parse_run(finished / "fused" / "P1-rrf60-m10.run")
    assert {r.system_tag for r in run_.values()} == {"P1-rrf60-m10"}


def test_rerun_skips_everything(collection, finished):
    before = {p: p.stat().st_mtime_ns for p in finished.rglob("*") if p.is_file()}
    assert run(collection, finished) == 0
    after = {p: p.stat().st_mtime_ns for p in finished.rglob("*") if p.is_file()}
    assert before == after


def test_byte_identical_across_runs(collection, finished, tmp_path):
    assert run(collection, tmp_path / "again") == 0
    assert tree(tmp_path / "again") == tree(finished)


def test_stage_isolation(collection, finished, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(finished, out)
    before = tree(out)
    runs_mtime = (out / "runs" / "bm25.run").stat().st_mtime_ns
    shutil.rmtree(out / "fused")
    assert run(collection, out) == 0
    assert tree(out) == before
    assert (out / "runs" / "bm25.run").stat().st_mtime_ns == runs_mtime


def test_force_reruns_identically(collection, finished, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(finished, out)
    assert run(collection, out, "--force") == 0
    assert tree(out) == tree(finished)


def test_edited_qrels_invalidate_evaluation(collection, finished, tmp_path):
    inputs = tmp_path / "inputs"
    shutil.copytree(collection, inputs)
    out = tmp_path / "copy"
    shutil.copytree(finished, out)
    index_mtime = (out / "index" / "index.bin").stat().st_mtime_ns
    qrels = inputs / "qrels.txt"
    lines = qrels.read_text().splitlines()
    qrels.write_text("\n".join(l for l in lines if not l.endswith(" 2")) + "\n")
    assert run(inputs, out) == 0
    assert (out / "eval" / "report.txt").read_bytes() != (finished / "eval" / "report.txt").read_bytes()
    assert (out / "index" / "index.bin").stat().st_mtime_ns == index_mtime


def test_missing_stage_named(collection, tmp_path, capsys):
    assert run(collection, tmp_path / "fresh", command="retrieve") == 3
    assert "stage 'index'" in capsys.readouterr().err


def test_single_stage_commands(collection, tmp_path):
    out = tmp_path / "stepwise"
    for stage in ("index", "generate", "retrieve", "fuse", "evaluate", "analyze"):
        assert run(collection, out, command=stage) == 0
    assert (out / "analysis" / "summary.tsv").exists()


def test_config_violations_listed(collection, tmp_path, capsys):
    code = main(
        ["evaluate", "-c", str(collection / "config.toml"), "--output", str(tmp_path / "x"),
         "--set", "fusion.m=[0]", "--set", "bm25.k1=-1", "--set", "generation.backend=llama"]
    )
    err = capsys.readouterr().err
    assert code == 2
    assert "config error" in err
    assert "fusion.m" in err and "k1" in err and "backend" in err


def test_unknown_config_key(collection, tmp_path, capsys):
    assert run(collection, tmp_path / "x", "--set", "fusion.kk=3") == 2
    assert "fusion.kk" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["index", "-c", str(tmp_path / "none.toml")]) == 2


def test_parse_error_exit_code(collection, tmp_path, capsys):
    inputs = tmp_path / "inputs"
    shutil.copytree(collection, inputs)
    (inputs / "qrels.txt").write_text("301 0 SYN000001 high\n")
    assert run(inputs, tmp_path / "out") == 5
    assert "parse error" in capsys.readouterr().err


def test_transport_error_exit_code(collection, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QVFUSE_TEST_KEY", "sk-test")
    code = run(
        collection, tmp_path / "out",
        "--backend", "openai",
        "--set", "generation.base_url=\"http://127.0.0.1:9/v1\"",
        "--set", "generation.api_key_env=\"QVFUSE_TEST_KEY\"",
        "--set", "generation.max_retries=0",
        command="generate",
    )
    assert code == 4
    assert "transport error" in capsys.readouterr().err


def test_strategy_flag(collection, tmp_path):
    out = tmp_path / "p2"
    assert run(collection, out, "--strategy", "P2") == 0
    assert sorted(p.name for p in (out / "fused").glob("*.run")) == ["P2-rrf60-m10.run", "P2-rrf60-m3.run"]


def test_init_config_loads(tmp_path, capsys):
    assert main(["init-config"]) == 0
    text = capsys.readouterr().out
    (tmp_path / "c.toml").write_text(text)
    cfg = load_config(tmp_path / "c.toml")
    assert cfg.fusion.k == 60 and cfg.fusion.m == [3, 5, 10, 100]
    assert cfg.generation.n == 100 and cfg.generation.temperature == 0.0
    assert cfg.bm25_params.depth == 1000
    assert cfg.paths.corpus == tmp_path / "corpus.jsonl"
