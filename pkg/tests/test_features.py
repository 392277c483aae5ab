import math

import numpy as np
import pytest
import requests

from src.errors import DimensionMismatch, EmbedderUnavailable, EmptyCorpus
from src.models import TableCorpus
from src.tools.embedding_tools import EmbedderHandle, embed_semantic, hash_embed
from src.tools.feature_tools import (
    PUNCTUATION_MARKS,
    STRUCTURAL_DIMENSION,
    STRUCTURAL_FIELDS,
    TAG_CLASSES,
    extract_all,
    extract_structural,
    fit_heuristic,
    representative_score,
    tag_token,
    transform_heuristic,
)
from tests.conftest import make_table


class FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload
        self.text = str(payload)

    def json(self):
        return self._payload


def test_structural_vector_layout():
    assert STRUCTURAL_DIMENSION == 20
    assert np.array_equal(extract_structural(""), np.zeros(20))
    v = extract_structural("a a a")
    assert v[STRUCTURAL_FIELDS.index("total_tokens")] == 3
    assert v[STRUCTURAL_FIELDS.index("unique_tokens")] == 1


def test_structural_punctuation_and_digits():
    v = extract_structural("Team, Wins; 2019")
    offset = 4 + len(TAG_CLASSES)
    assert v[offset + PUNCTUATION_MARKS.index(",")] == 1
    assert v[offset + PUNCTUATION_MARKS.index(";")] == 1
    assert v[STRUCTURAL_FIELDS.index("digit_tokens")] == 1


def test_tagger_rule_order():
    assert tag_token("2019", False) == "NUM"
    assert tag_token(",", False) == "PUNCT"
    assert tag_token("the", False) == "STOP"
    assert tag_token("Denver", False) == "PROPN"
    assert tag_token("Denver", True) == "OTHER"
    assert tag_token("famous", False) == "ADJ"
    assert tag_token("running", False) == "VERB"


def test_idf_for_identical_documents_is_one():
    v = fit_heuristic(["team wins", "team wins"])
    assert np.allclose(v.idf, 1.0)


def test_idf_smoothing_formula():
    v = fit_heuristic(["team wins", "team"])
    assert v.idf[v.vocabulary["wins"]] == pytest.approx(math.log(3 / 2) + 1, abs=1e-9)
    assert v.terms() == sorted(v.terms())


def test_heuristic_transform_counts_times_idf():
    v = fit_heuristic(["team wins", "team wins"])
    vec = transform_heuristic(v, "team team").toarray().ravel()
    assert vec[v.vocabulary["team"]] == pytest.approx(2.0)
    assert not transform_heuristic(v, "unknown words only").toarray().any()


def test_fit_heuristic_rejects_empty_corpus():
    with pytest.raises(EmptyCorpus):
        fit_heuristic([])


def test_representative_score_conventions():
    assert representative_score(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(0.70711, abs=1e-5)
    assert representative_score(np.array([0.0, 2.0]), np.array([0.0, 2.0])) == pytest.approx(1.0)
    assert representative_score(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert representative_score(np.zeros(2), np.array([1.0, 1.0])) == 0.0


def test_hash_embedder_is_deterministic_and_unit_norm():
    a = hash_embed(["nfl 2019 season", "", "!!!"], 64)
    b = hash_embed(["nfl 2019 season", "", "!!!"], 64)
    assert a.shape == (3, 64)
    assert np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)


def test_embed_semantic_rejects_empty_input(hash_handle):
    with pytest.raises(ValueError):
        embed_semantic([], hash_handle)
    with pytest.raises(ValueError):
        embed_semantic(["ok", ""], hash_handle)


def test_remote_embedder_batches_in_order(monkeypatch):
    calls = []

    def fake_post(url, json, timeout):
        calls.append(list(json["texts"]))
        vectors = [[float(len(t)), 1.0, 0.0] for t in json["texts"]]
        return FakeResponse(payload={"vectors": vectors, "dimension": 3})

    monkeypatch.setattr("src.tools.embedding_tools.requests.post", fake_post)
    handle = EmbedderHandle(endpoint="http://embedder", dimension=3, batch_limit=2, max_in_flight=2)
    texts = ["a", "bb", "ccc", "dddd", "eeeee"]
    vectors = embed_semantic(texts, handle)
    assert vectors[:, 0].tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert sorted(len(c) for c in calls) == [1, 2, 2]


def test_remote_dimension_mismatch(monkeypatch):
    monkeypatch.setattr(
        "src.tools.embedding_tools.requests.post",
        lambda url, json, timeout: FakeResponse(payload={"vectors": [[0.0] * 383], "dimension": 383}),
    )
    with pytest.raises(DimensionMismatch):
        embed_semantic(["x"], EmbedderHandle(endpoint="http://embedder", dimension=384))


def test_embedder_failure_names_first_table_of_batch(monkeypatch):
    def fake_post(url, json, timeout):
        if "[Caption] c2" in json["texts"][0]:
            raise requests.ConnectionError("refused")
        return FakeResponse(payload={"vectors": [[1.0, 0.0]] * len(json["texts"]), "dimension": 2})

    monkeypatch.setattr("src.tools.embedding_tools.requests.post", fake_post)
    corpus = TableCorpus([make_table(f"t{i}", f"c{i}", ["h"]) for i in range(4)])
    handle = EmbedderHandle(endpoint="http://embedder", dimension=2, batch_limit=2, max_in_flight=1)
    with pytest.raises(EmbedderUnavailable) as info:
        extract_all(corpus, handle)
    assert info.value.batch_index == 1
    assert info.value.table_id == "t2"


def test_extract_all_is_keyed_and_deterministic(toy_corpus, hash_handle):
    a = extract_all(toy_corpus, hash_handle)
    b = extract_all(toy_corpus, hash_handle)
    assert a.keys() == toy_corpus.ids()
    assert np.array_equal(a.sem, b.sem)
    assert np.array_equal(a.struct, b.struct)
    assert (a.heur != b.heur).nnz == 0
    assert a["music_0"].struct_.shape == (STRUCTURAL_DIMENSION,)
