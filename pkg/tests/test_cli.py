import json

import pytest

from src.cli import main
from src.data_loader import save_corpus, save_queries
from src.models import TableCorpus
from src.tools.benchmark_tools import BenchmarkExample, Difficulty
from tests.conftest import make_table, qa_query


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    monkeypatch.setattr("src.cli.setup_logging", lambda level=None: None)


@pytest.fixture
def index_path(tmp_path, toy_corpus, capsys):
    corpus = save_corpus(toy_corpus, str(tmp_path / "corpus.jsonl"))
    out = str(tmp_path / "toy.tgridx")
    assert main(["build-index", "--corpus", corpus, "--out", out, "--K", "3", "--k", "2"]) == 0
    capsys.readouterr()
    return out


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def _examples_file(tmp_path):
    path = tmp_path / "examples.jsonl"
    examples = [
        BenchmarkExample(qa_query("q1", "music album chart", "music_0", "album-1"), ["music_0"], Difficulty.EASY, "music_0"),
        BenchmarkExample(qa_query("q2", "cities census area", "cities_2", "area-0"), ["cities_2"], Difficulty.EASY, "cities_2"),
    ]
    path.write_text("".join(json.dumps(e.to_record()) + "\n" for e in examples), encoding="utf-8")
    return str(path)


def test_build_index_and_inspect(index_path, capsys):
    assert main(["inspect", "--index", index_path]) == 0
    payload = _stdout_json(capsys)
    assert payload["n_tables"] == 12
    assert payload["params"]["K"] == 3
    assert set(payload["families"]) == {"sem", "struct", "heur"}
    assert all(sum(f["cluster_sizes"]) == 12 for f in payload["families"].values())


def test_retrieve_prints_ranking(index_path, capsys):
    assert main(["retrieve", "--index", index_path, "--query", "music album chart", "--top-n", "3"]) == 0
    payload = _stdout_json(capsys)
    assert len(payload["ranked"]) <= 3
    assert payload["coarse"]["corpus_size"] == 12


def test_retrieve_coarse_stage(index_path, capsys):
    assert main(["retrieve", "--index", index_path, "--query", "music", "--stage", "coarse"]) == 0
    payload = _stdout_json(capsys)
    assert "ranked" not in payload
    assert payload["coarse"]["union_size"] >= 1


def test_eval_retrieval_command(index_path, tmp_path, capsys):
    out = tmp_path / "report.json"
    argv = ["eval-retrieval", "--examples", _examples_file(tmp_path), "--index", index_path, "--ks", "1", "5", "--out", str(out)]
    assert main(argv) == 0
    payload = _stdout_json(capsys)
    assert list(payload["per_k"]) == ["1", "5"]
    assert json.loads(out.read_text(encoding="utf-8")) == payload


def test_eval_e2e_with_na_generator(index_path, tmp_path, capsys):
    argv = [
        "eval-e2e", "--examples", _examples_file(tmp_path), "--index", index_path,
        "--corpus", str(tmp_path / "corpus.jsonl"), "--generator", "builtin:na",
    ]
    assert main(argv) == 0
    payload = _stdout_json(capsys)
    assert payload["em"] == 0.0
    assert payload["n_na"] == 2


def test_eval_e2e_rejects_other_corpus(index_path, tmp_path, capsys):
    other = save_corpus(TableCorpus([make_table("x", "other", ["a", "b"])]), str(tmp_path / "other.jsonl"))
    argv = ["eval-e2e", "--examples", _examples_file(tmp_path), "--index", index_path, "--corpus", other]
    assert main(argv) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "IOFailure"


def test_build_benchmark_command(tmp_path, capsys):
    headers = ["player", "goals", "wins", "points", "rank"]
    sources = TableCorpus([make_table(f"club{i}", f"Club {i} season results", headers, n_rows=6) for i in range(4)])
    queries = [qa_query(f"club{i}-q", f"Which player scored the most goals for club {i}?", f"club{i}", "goals-2") for i in range(4)]
    argv = [
        "build-benchmark",
        "--sources", save_corpus(sources, str(tmp_path / "sources.jsonl")),
        "--queries", save_queries(queries, str(tmp_path / "queries.jsonl")),
        "--out", str(tmp_path / "bench"),
        "--seed", "5",
    ]
    assert main(argv) == 0
    payload = _stdout_json(capsys)
    assert payload["n_examples"] == 4
    assert (tmp_path / "bench" / "examples.jsonl").is_file()


def test_usage_errors_exit_2(capsys):
    assert main(["retrieve", "--bogus"]) == 2
    assert main(["build-index", "--corpus", "c.jsonl", "--out", "x", "--alpha", "0.5"]) == 2
    assert main([]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "UsageError"


def test_missing_index_exits_1(tmp_path, capsys):
    assert main(["inspect", "--index", str(tmp_path / "nope.tgridx")]) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "IOFailure"
