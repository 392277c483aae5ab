import numpy as np
import pytest
from scipy import sparse

from src.tools.coarse_retrieval_tools import CoarseResult, coarse_retrieve, query_features
from src.tools.embedding_tools import EmbedderHandle
from src.tools.feature_tools import STRUCTURAL_DIMENSION, FeatureSet, HeuristicVectorizer, NodeFeatures, extract_all
from src.tools.fine_retrieval_tools import (
    LocalSubgraph,
    PPRConfig,
    build_local_subgraph,
    fine_retrieve,
    personalization,
    ppr,
    similarity_matrix,
    transition_matrix,
)
from src.tools.hypergraph_tools import build_index
from tests.conftest import random_caption_corpus


def make_features(ids, sem):
    sem = np.asarray(sem, dtype=np.float64)
    return FeatureSet(
        table_ids=list(ids),
        sem=sem,
        struct=np.zeros((len(ids), STRUCTURAL_DIMENSION)),
        heur=sparse.csr_matrix((len(ids), 0)),
        vectorizer=HeuristicVectorizer(vocabulary={}, idf=np.zeros(0), doc_count=len(ids)),
    )


def oracle_ppr(P, h, alpha):
    patched = P.copy()
    patched[P.sum(axis=1) == 0] = h
    n = len(h)
    return np.linalg.solve(np.eye(n) - alpha * patched.T, (1 - alpha) * h)


def random_graph(rng, max_nodes=64):
    n = int(rng.integers(1, max_nodes + 1))
    sims = rng.uniform(0, 1, size=(n, n))
    sims = np.triu(sims, 1)
    sims = sims + sims.T
    tau = rng.uniform(0, 1)
    S = np.where(sims >= tau, sims, 0.0)
    return S, rng.dirichlet(np.ones(n))


def test_ppr_matches_linear_solve_on_random_graphs():
    rng = np.random.default_rng(2024)
    cfg = PPRConfig(alpha=0.85, epsilon=1e-12, max_iter=1000)
    for _ in range(200):
        S, h = random_graph(rng)
        P = transition_matrix(S)
        result = ppr(P, h, cfg)
        assert not result.truncated
        assert np.max(np.abs(result.v - oracle_ppr(P, h, cfg.alpha))) < 1e-6
        assert result.v.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(result.v >= 0)
        residuals = np.array(result.residuals)
        assert np.all(residuals[1:] <= residuals[:-1] + 1e-12)


def test_ppr_is_permutation_equivariant():
    rng = np.random.default_rng(5)
    S, h = random_graph(rng, max_nodes=20)
    perm = rng.permutation(len(h))
    cfg = PPRConfig(epsilon=1e-12, max_iter=1000)
    v = ppr(transition_matrix(S), h, cfg).v
    v_perm = ppr(transition_matrix(S[np.ix_(perm, perm)]), h[perm], cfg).v
    assert np.allclose(v_perm, v[perm], atol=1e-9)


def test_ppr_single_node():
    result = ppr(np.zeros((1, 1)), np.array([1.0]), PPRConfig())
    assert result.v.tolist() == [1.0]
    assert result.iterations == 1


def test_ppr_disconnected_pair_keeps_personalization():
    result = ppr(np.zeros((2, 2)), np.array([0.5, 0.5]), PPRConfig())
    assert np.allclose(result.v, [0.5, 0.5])


def test_ppr_weighted_path_graph():
    S = np.zeros((5, 5))
    for i, w in enumerate([0.9, 0.5, 0.7, 0.6]):
        S[i, i + 1] = S[i + 1, i] = w
    h = np.array([0.4, 0.1, 0.2, 0.1, 0.2])
    result = ppr(transition_matrix(S), h, PPRConfig(epsilon=1e-12, max_iter=1000))
    assert np.max(np.abs(result.v - oracle_ppr(transition_matrix(S), h, 0.85))) < 1e-6


def test_ppr_isolated_node_teleports_to_personalization():
    S = np.array([[0.0, 0.8, 0.0], [0.8, 0.0, 0.0], [0.0, 0.0, 0.0]])
    h = np.array([0.2, 0.3, 0.5])
    P = transition_matrix(S)
    assert P[2].tolist() == [0.0, 0.0, 0.0]
    v = ppr(P, h, PPRConfig(epsilon=1e-12, max_iter=1000)).v
    assert np.max(np.abs(v - oracle_ppr(P, h, 0.85))) < 1e-6


def test_truncation_is_flagged():
    S, h = random_graph(np.random.default_rng(1), max_nodes=10)
    result = ppr(transition_matrix(S), h, PPRConfig(epsilon=1e-300, max_iter=3))
    assert result.truncated
    assert result.iterations == 3


def test_transition_matrix_rows():
    P = transition_matrix(np.array([[0.5, 0.5, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 0.0]]))
    assert P[0].tolist() == [0.5, 0.5, 0.0]
    assert P[1].tolist() == [0.5, 0.5, 0.0]
    assert P[2].tolist() == [0.0, 0.0, 0.0]


def test_similarity_matrix_from_edges():
    g = LocalSubgraph(node_ids=["a", "b", "c"], edges=[(0, 1, 0.9)], tau=0.5)
    S = similarity_matrix(g)
    assert S[0, 1] == S[1, 0] == 0.9
    assert np.count_nonzero(S) == 2
    assert not similarity_matrix(LocalSubgraph(["a", "b"], [], 0.5)).any()


def test_local_subgraph_matches_pairwise_filter():
    sem = [[1.0, 0.0, 0.0], [0.8, 0.6, 0.0], [0.0, 1.0, 0.0], [0.6, 0.0, 0.8]]
    ids = ["a", "b", "c", "d"]
    features = make_features(ids, sem)
    unit = np.asarray(sem) / np.linalg.norm(sem, axis=1, keepdims=True)
    for tau in (0.0, 0.5, 0.7, 1.0):
        g = build_local_subgraph(set(ids), features, tau)
        expected = {
            (i, j) for i in range(4) for j in range(i + 1, 4)
            if max(unit[i] @ unit[j], 0.0) >= tau
        }
        assert {(i, j) for i, j, _ in g.edges} == expected
        assert all(tau <= w <= 1.0 for _, _, w in g.edges)
    assert len(build_local_subgraph(set(ids), features, 0.0).edges) == 6


def test_tau_one_connects_only_parallel_vectors():
    features = make_features(["a", "b", "c"], [[1.0, 0.0], [2.0, 0.0], [1.0, 1.0]])
    g = build_local_subgraph({"a", "b", "c"}, features, 1.0)
    assert [(i, j) for i, j, _ in g.edges] == [(0, 1)]


def test_personalization_rules():
    features = make_features(["a", "b", "c"], np.eye(3))
    g = LocalSubgraph(node_ids=["a", "b", "c"], edges=[], tau=0.5)
    qf = NodeFeatures(sem=np.array([0.8, 0.2, 0.0]), struct_=None, heur=None)
    h = personalization(qf, g, features)
    assert np.allclose(h, [0.8, 0.2, 0.0])

    negative = NodeFeatures(sem=np.array([-1.0, -1.0, -1.0]), struct_=None, heur=None)
    assert np.allclose(personalization(negative, g, features), [1 / 3] * 3)

    single = LocalSubgraph(node_ids=["a"], edges=[], tau=0.5)
    assert personalization(qf, single, features).tolist() == [1.0]


def test_cosine_ranking_when_damping_is_tiny():
    corpus = random_caption_corpus(50, seed=3)
    features = extract_all(corpus, EmbedderHandle())
    rng = np.random.default_rng(11)
    b = 0.1 + 0.05 * rng.permutation(50)
    sem = np.zeros((50, 52))
    sem[:, 0] = 1.0
    sem[np.arange(50), np.arange(50) + 1] = b
    features.sem = sem
    ix = build_index(corpus, features, K=1, k=50)

    q = np.zeros(52)
    q[0] = 1.0
    qf = NodeFeatures(sem=q, struct_=np.zeros(STRUCTURAL_DIMENSION), heur=ix.vectorizer.transform(["query"]))
    coarse = coarse_retrieve("query", ix, EmbedderHandle(dimension=52), qf=qf)
    assert len(coarse.union_ids) == 50

    result = fine_retrieve(qf, coarse, ix, PPRConfig(alpha=0.01, top_n=50), tau=0.0)
    cosines = 1.0 / np.sqrt(1.0 + b ** 2)
    expected = [corpus.ids()[i] for i in sorted(range(50), key=lambda i: (-cosines[i], corpus.ids()[i]))]
    assert result.ranked_ids == expected
    assert sum(result.scores.values()) == pytest.approx(1.0, abs=1e-6)


def test_gold_caption_query_ranks_gold_in_top_ten():
    corpus = random_caption_corpus(100, seed=1)
    handle = EmbedderHandle(dimension=1024)
    ix = build_index(corpus, extract_all(corpus, handle), K=1, k=100)
    for gold in ["t0003", "t0042", "t0077"]:
        caption = corpus.get(gold).caption
        qf = query_features(caption, ix, handle)
        coarse = coarse_retrieve(caption, ix, handle, qf=qf)
        result = fine_retrieve(qf, coarse, ix, PPRConfig(top_n=10), tau=0.5)
        assert gold in result.ranked_ids


def test_single_candidate_is_ranked_first(toy_index, hash_handle):
    qf = query_features("football", toy_index, hash_handle)
    coarse = CoarseResult(per_family_choice={}, union_ids={"music_1"}, per_family_mean_scores={}, corpus_size=12)
    result = fine_retrieve(qf, coarse, toy_index)
    assert result.ranked == [("music_1", pytest.approx(1.0))]


def test_ranking_ties_break_by_id(toy_index):
    qf = NodeFeatures(sem=np.zeros(toy_index.params.embedder_dimension), struct_=None, heur=None)
    coarse = CoarseResult(per_family_choice={}, union_ids={"cities_2", "cities_0"}, per_family_mean_scores={}, corpus_size=12)
    result = fine_retrieve(qf, coarse, toy_index, PPRConfig(top_n=2), tau=1.0)
    assert result.ranked_ids == ["cities_0", "cities_2"]
