import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np

from src.errors import DimensionMismatch
from src.models import Query
from src.tools.embedding_tools import EmbedderHandle, embed_semantic
from src.tools.feature_tools import NodeFeatures, cosine_rows, extract_structural
from src.tools.hypergraph_tools import FAMILIES, ClusterFamily, HypergraphIndex
from src.tools.linearizer_tools import linearize_query

logger = logging.getLogger(__name__)


@dataclass
class CoarseResult:
    per_family_choice: Dict[str, int]
    union_ids: Set[str]
    per_family_mean_scores: Dict[str, List[float]]
    corpus_size: int = 0
    chosen_sizes: Dict[str, int] = field(default_factory=dict)

    @property
    def retained_fraction(self) -> float:
        return len(self.union_ids) / self.corpus_size if self.corpus_size else 0.0

    def to_dict(self) -> Dict:
        return {
            "per_family_choice": dict(self.per_family_choice),
            "chosen_sizes": dict(self.chosen_sizes),
            "union_size": len(self.union_ids),
            "corpus_size": self.corpus_size,
            "retained_fraction": round(self.retained_fraction, 6),
            "per_family_mean_scores": {
                phi: [round(s, 6) for s in scores] for phi, scores in self.per_family_mean_scores.items()
            },
            "union_ids": sorted(self.union_ids),
        }


def query_features(q: Union[Query, str], ix: HypergraphIndex, h: EmbedderHandle) -> NodeFeatures:
    """
    Embed a query with the index's own feature pipeline.

    `struct_` is already standardized with the index's stored statistics, so it lives in the
    same space as the struct centroids.
    """
    text = linearize_query(q)
    sem = embed_semantic([text], h)[0]
    if sem.shape[0] != ix.params.embedder_dimension:
        raise DimensionMismatch(ix.params.embedder_dimension, sem.shape[0])
    struct = ix.struct_scaler.transform(extract_structural(text).reshape(1, -1))[0]
    heur = ix.vectorizer.transform([text])
    return NodeFeatures(sem=sem, struct_=struct, heur=heur)


def _family_query_vector(qf: NodeFeatures, feature_type: str):
    return {"sem": qf.sem, "struct": qf.struct_, "heur": qf.heur}[feature_type]


def assign_cluster(qf: NodeFeatures, family: ClusterFamily, ix: HypergraphIndex) -> Tuple[int, List[float]]:
    """Cluster whose typical nodes score highest on average against the query; ties go to the lower index."""
    vectors = ix.family_vectors(family.feature_type)
    query_vector = _family_query_vector(qf, family.feature_type)
    means = []
    for typical in family.typical:
        scores = cosine_rows(vectors[ix.features.rows(typical)], query_vector)
        means.append(float(np.mean(scores)))
    # np.argmax returns the first maximum
    return int(np.argmax(means)), means


def coarse_retrieve(
    q: Union[Query, str],
    ix: HypergraphIndex,
    h: EmbedderHandle,
    families: Optional[Iterable[str]] = None,
    qf: Optional[NodeFeatures] = None,
) -> CoarseResult:
    """Pick one cluster per feature type and return the union of their members."""
    selected = list(families) if families else list(FAMILIES)
    unknown = [phi for phi in selected if phi not in ix.families]
    if unknown:
        raise ValueError(f"Unknown feature families: {unknown}")
    if qf is None:
        qf = query_features(q, ix, h)

    choice, means, sizes = {}, {}, {}
    union: Set[str] = set()
    for phi in selected:
        family = ix.families[phi]
        cluster, scores = assign_cluster(qf, family, ix)
        members = family.members(cluster)
        choice[phi], means[phi], sizes[phi] = cluster, scores, len(members)
        union.update(members)

    result = CoarseResult(
        per_family_choice=choice,
        union_ids=union,
        per_family_mean_scores=means,
        corpus_size=len(ix.table_ids),
        chosen_sizes=sizes,
    )
    logger.debug(
        f"Coarse choice {choice}, {len(union)}/{result.corpus_size} tables retained "
        f"({result.retained_fraction:.1%})"
    )
    return result
