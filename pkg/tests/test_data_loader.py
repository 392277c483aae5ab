import json

import pytest

from src.data_loader import (
    corpus_digest,
    load_corpus,
    load_queries,
    save_corpus,
    save_queries,
    validate_table,
)
from src.errors import InvalidQuery, IOFailure, SchemaViolation
from src.models import Query, Table, TableCorpus, TaskType
from tests.conftest import make_table


def test_validate_table_accepts_well_formed_table():
    assert validate_table(make_table("a", "cap", ["x", "y"], n_rows=2)) == []


def test_validate_table_reports_ragged_row_index():
    t = Table(id="a", caption="", headers=["x", "y"], entries=[["1", "2"], ["3"]])
    violations = validate_table(t)
    assert [(v.kind, v.row) for v in violations] == [("RaggedRow", 1)]


def test_validate_table_reports_empty_schema():
    kinds = {v.kind for v in validate_table(Table(id="", caption="", headers=[], entries=[]))}
    assert kinds == {"EmptyId", "NoColumns", "NoRows"}


def test_save_then_load_round_trip(tmp_path, toy_corpus):
    path = save_corpus(toy_corpus, str(tmp_path / "corpus.jsonl"))
    loaded = load_corpus(path)
    assert loaded == toy_corpus
    assert loaded.ids() == toy_corpus.ids()


def test_empty_caption_survives_round_trip(tmp_path):
    corpus = TableCorpus([make_table("a", "", ["x"], n_rows=1)], source_tag="s")
    loaded = load_corpus(save_corpus(corpus, str(tmp_path / "c.jsonl")))
    assert loaded.get("a").caption == ""


def test_load_collects_every_violation(tmp_path):
    lines = [
        json.dumps({"id": "a", "caption": "", "headers": ["x"], "entries": [["1"]]}),
        json.dumps({"id": "a", "caption": "", "headers": ["x"], "entries": [["1"]]}),
        json.dumps({"id": "b", "caption": "", "headers": ["x", "y"], "entries": [["1"]]}),
        "{not json",
    ]
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(SchemaViolation) as info:
        load_corpus(str(path))
    kinds = sorted(v.kind for v in info.value.violations)
    assert kinds == ["BadJson", "DuplicateId", "RaggedRow"]


def test_missing_path_is_io_failure(tmp_path):
    with pytest.raises(IOFailure):
        load_corpus(str(tmp_path / "nope.jsonl"))


def test_csv_directory_ingestion(tmp_path):
    (tmp_path / "b.csv").write_text("name,year\nAna,1999\nRui,NA\n", encoding="utf-8")
    (tmp_path / "a.csv").write_text("k,v\n1,2\n", encoding="utf-8")
    corpus = load_corpus(str(tmp_path), format="csv_dir")
    assert corpus.ids() == ["a", "b"]
    b = corpus.get("b")
    assert b.caption == ""
    assert b.headers == ["name", "year"]
    # cells stay text, "NA" included
    assert b.entries == [["Ana", "1999"], ["Rui", "NA"]]


def test_corpus_digest_is_stable_and_content_sensitive(toy_corpus):
    other = TableCorpus([make_table("x", "cap", ["a"], n_rows=1)])
    assert corpus_digest(toy_corpus) == corpus_digest(TableCorpus(toy_corpus.tables, source_tag="renamed"))
    assert corpus_digest(toy_corpus) != corpus_digest(other)


def test_queries_round_trip(tmp_path):
    queries = [
        Query(id="q1", text="Is the claim true?", task_type=TaskType.TFV, gold_table_ids=["a"], gold_answer=1),
        Query(id="q2", text="Who won?", gold_table_ids=["a", "b"], gold_answer=["Ana", "Rui"]),
    ]
    loaded = load_queries(save_queries(queries, str(tmp_path / "q.jsonl")))
    assert loaded == queries


def test_query_invariants():
    with pytest.raises(InvalidQuery):
        Query(id="q", text="   ")
    with pytest.raises(InvalidQuery):
        Query(id="q", text="claim", task_type=TaskType.TFV, gold_answer=2)


def test_csv_short_row_is_ragged(tmp_path):
    (tmp_path / "t.csv").write_text("a,b,c\n1,2,3\n4,5\n", encoding="utf-8")
    with pytest.raises(SchemaViolation) as info:
        load_corpus(str(tmp_path), format="csv_dir")
    assert [(v.table_id, v.kind, v.row) for v in info.value.violations] == [("t", "RaggedRow", 1)]


def test_csv_long_row_is_ragged(tmp_path):
    (tmp_path / "t.csv").write_text("a,b\n1,2\n4,5,6\n7,8\n", encoding="utf-8")
    with pytest.raises(SchemaViolation) as info:
        load_corpus(str(tmp_path), format="csv_dir")
    assert [(v.kind, v.row) for v in info.value.violations] == [("RaggedRow", 1)]
    assert "3 cells" in info.value.violations[0].reason


def test_csv_trailing_empty_cell_is_kept(tmp_path):
    (tmp_path / "t.csv").write_text("a,b\n1,\n", encoding="utf-8")
    assert load_corpus(str(tmp_path), format="csv_dir").get("t").entries == [["1", ""]]


def test_tsv_files_split_on_tabs(tmp_path):
    (tmp_path / "t.tsv").write_text("a\tb\n1\t2,5\n", encoding="utf-8")
    t = load_corpus(str(tmp_path), format="csv_dir").get("t")
    assert t.headers == ["a", "b"]
    assert t.entries == [["1", "2,5"]]


@pytest.mark.parametrize("header", ['"v1"', "[1]", "null"])
def test_corpus_header_must_be_an_object(tmp_path, header):
    path = tmp_path / "c.jsonl"
    path.write_text('{"__corpus__": ' + header + "}\n", encoding="utf-8")
    with pytest.raises(IOFailure):
        load_corpus(str(path))
