import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import numpy as np
from sklearn.metrics.pairwise import cosine_similarity

from src.tools.coarse_retrieval_tools import CoarseResult
from src.tools.feature_tools import FeatureSet, NodeFeatures, cosine_rows
from src.tools.hypergraph_tools import HypergraphIndex

logger = logging.getLogger(__name__)

_PARALLEL_SNAP = 1e-9


@dataclass(frozen=True)
class PPRConfig:
    alpha: float = 0.85
    epsilon: float = 1e-8
    max_iter: int = 100
    top_n: int = 10

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iter < 1 or self.top_n < 1:
            raise ValueError("max_iter and top_n must be >= 1")


@dataclass
class LocalSubgraph:
    """Candidate tables (ascending id order) joined by semantic edges scoring at least tau."""

    node_ids: List[str]
    edges: List[Tuple[int, int, float]]
    tau: float


@dataclass
class PPRResult:
    v: np.ndarray
    iterations: int
    truncated: bool
    residuals: List[float] = field(default_factory=list)


@dataclass
class RetrievalResult:
    ranked: List[Tuple[str, float]]
    subgraph: LocalSubgraph
    scores: Dict[str, float] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    truncated: bool = False

    @property
    def ranked_ids(self) -> List[str]:
        return [tid for tid, _ in self.ranked]

    def to_dict(self) -> Dict:
        return {
            "ranked": [{"table_id": tid, "score": round(score, 8)} for tid, score in self.ranked],
            "n_candidates": len(self.subgraph.node_ids),
            "n_edges": len(self.subgraph.edges),
            "tau": self.subgraph.tau,
            "iterations": self.iterations,
            "truncated": self.truncated,
        }


def _pairwise_sem(features: FeatureSet, node_ids: List[str]) -> np.ndarray:
    sims = cosine_similarity(features.sem[features.rows(node_ids)])
    sims = np.clip(sims, 0.0, 1.0)
    sims[sims > 1.0 - _PARALLEL_SNAP] = 1.0
    return sims


def build_local_subgraph(candidates: Iterable[str], features: FeatureSet, tau: float) -> LocalSubgraph:
    node_ids = sorted(set(candidates))
    if not node_ids:
        raise ValueError("build_local_subgraph needs at least one candidate")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    sims = _pairwise_sem(features, node_ids)
    rows, cols = np.nonzero(np.triu(sims >= tau, k=1))
    edges = [(int(i), int(j), float(sims[i, j])) for i, j in zip(rows, cols)]
    return LocalSubgraph(node_ids=node_ids, edges=edges, tau=tau)


def similarity_matrix(g: LocalSubgraph) -> np.ndarray:
    n = len(g.node_ids)
    S = np.zeros((n, n), dtype=np.float64)
    for i, j, w in g.edges:
        S[i, j] = S[j, i] = w
    return S


def transition_matrix(S: np.ndarray) -> np.ndarray:
    """Row-normalize S. All-zero (dangling) rows stay zero; ppr sends their mass to h."""
    S = np.asarray(S, dtype=np.float64)
    sums = S.sum(axis=1, keepdims=True)
    return np.divide(S, sums, out=np.zeros_like(S), where=sums > 0)


def personalization(qf: NodeFeatures, g: LocalSubgraph, features: FeatureSet) -> np.ndarray:
    scores = cosine_rows(features.sem[features.rows(g.node_ids)], qf.sem)
    scores = np.clip(scores, 0.0, None)
    total = scores.sum()
    if total <= 0.0:
        return np.full(len(g.node_ids), 1.0 / len(g.node_ids))
    return scores / total


def ppr(P: np.ndarray, h: np.ndarray, cfg: PPRConfig) -> PPRResult:
    """
    Power iteration v <- (1 - alpha) h + alpha (P^T v + d h), starting from v = h, where d is the
    mass currently sitting on dangling nodes. Stops at the first iterate whose L1 change drops
    below epsilon; otherwise returns the max_iter-th iterate flagged as truncated.
    """
    P = np.asarray(P, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    dangling = P.sum(axis=1) == 0
    PT = P.T
    v = h.copy()
    residuals = []
    for iteration in range(1, cfg.max_iter + 1):
        v_next = (1.0 - cfg.alpha) * h + cfg.alpha * (PT @ v + v[dangling].sum() * h)
        residual = float(np.abs(v_next - v).sum())
        residuals.append(residual)
        v = v_next
        if residual < cfg.epsilon:
            return PPRResult(v=v, iterations=iteration, truncated=False, residuals=residuals)
    logger.warning(f"PageRank did not converge in {cfg.max_iter} iterations (residual {residuals[-1]:.2e})")
    return PPRResult(v=v, iterations=cfg.max_iter, truncated=True, residuals=residuals)


def rank_scores(node_ids: List[str], v: np.ndarray, top_n: int) -> List[Tuple[str, float]]:
    order = sorted(range(len(node_ids)), key=lambda i: (-v[i], node_ids[i]))
    return [(node_ids[i], float(v[i])) for i in order[:top_n]]


def fine_retrieve(
    qf: NodeFeatures,
    coarse: CoarseResult,
    ix: HypergraphIndex,
    cfg: PPRConfig = PPRConfig(),
    tau: float = 0.5,
) -> RetrievalResult:
    """Rank the coarse candidates by personalized PageRank over their semantic local subgraph."""
    if not coarse.union_ids:
        raise ValueError("fine_retrieve needs a non-empty candidate set")
    timings = {}
    start = time.perf_counter()
    g = build_local_subgraph(coarse.union_ids, ix.features, tau)
    P = transition_matrix(similarity_matrix(g))
    h = personalization(qf, g, ix.features)
    timings["subgraph"] = time.perf_counter() - start

    start = time.perf_counter()
    result = ppr(P, h, cfg)
    timings["pagerank"] = time.perf_counter() - start

    ranked = rank_scores(g.node_ids, result.v, cfg.top_n)
    logger.debug(
        f"Fine retrieval over {len(g.node_ids)} nodes / {len(g.edges)} edges: "
        f"{result.iterations} iterations, top={ranked[0][0]}"
    )
    return RetrievalResult(
        ranked=ranked,
        subgraph=g,
        scores={tid: float(score) for tid, score in zip(g.node_ids, result.v)},
        timings=timings,
        iterations=result.iterations,
        truncated=result.truncated,
    )
