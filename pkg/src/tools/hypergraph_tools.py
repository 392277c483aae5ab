import base64
import gzip
import io
import json
import logging
import time
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.preprocessing import StandardScaler, normalize

from src.data_loader import corpus_digest
from src.errors import IOFailure, KTooLarge, VersionMismatch
from src.models import TableCorpus
from src.tools.feature_tools import (
    STRUCTURAL_DIMENSION,
    FeatureSet,
    HeuristicVectorizer,
    cosine_rows,
)

logger = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1
INDEX_MAGIC = b"TGRIDX\n"
FAMILIES = ("sem", "struct", "heur")

Matrix = Union[np.ndarray, sparse.csr_matrix]


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int


def _squared_distances(vectors: Matrix, centroids: np.ndarray, assignments: np.ndarray) -> np.ndarray:
    diff = vectors - centroids[assignments] if not sparse.issparse(vectors) else vectors.toarray() - centroids[assignments]
    return np.einsum("ij,ij->i", diff, diff)


def _repair_empty_clusters(vectors: Matrix, result: KMeansResult, K: int) -> KMeansResult:
    """Move the point farthest from its centroid into each empty cluster until none is empty."""
    assignments = result.assignments.copy()
    centroids = result.centroids.copy()
    while True:
        sizes = np.bincount(assignments, minlength=K)
        empty = np.flatnonzero(sizes == 0)
        if empty.size == 0:
            break
        distances = _squared_distances(vectors, centroids, assignments)
        distances[sizes[assignments] <= 1] = -1.0
        donor = int(np.argmax(distances))
        target = int(empty[0])
        assignments[donor] = target
        point = vectors[donor].toarray().ravel() if sparse.issparse(vectors) else vectors[donor]
        centroids[target] = point
        logger.debug(f"Empty cluster {target} repaired with point {donor}")
    inertia = float(_squared_distances(vectors, centroids, assignments).sum())
    return KMeansResult(assignments, centroids, inertia, result.n_iter)


def kmeans(vectors: Matrix, K: int, seed: int = 0, max_iter: int = 100, family: Optional[str] = None) -> KMeansResult:
    """
    Lloyd k-means with k-means++ seeding driven by `seed`; stops at max_iter or when assignments
    stop changing. Empty clusters are repaired so that every cluster has at least one member.
    """
    n_points = vectors.shape[0]
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if K > n_points:
        raise KTooLarge(K, n_points, family)

    model = KMeans(n_clusters=K, init="k-means++", n_init=1, max_iter=max_iter, tol=0.0, random_state=seed, algorithm="lloyd")
    with warnings.catch_warnings():
        # duplicated points yield fewer distinct clusters than K; handled by the repair below
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        model.fit(vectors)
    result = KMeansResult(
        assignments=model.labels_.astype(np.int64),
        centroids=np.asarray(model.cluster_centers_, dtype=np.float64),
        inertia=float(model.inertia_),
        n_iter=int(model.n_iter_),
    )
    return _repair_empty_clusters(vectors, result, K)


def select_typical(member_ids: List[str], member_vectors: Matrix, centroid: np.ndarray, k: int) -> List[str]:
    """Top-k members by representative score to the centroid; ties go to the smaller id."""
    if not member_ids:
        raise ValueError("select_typical needs at least one member")
    scores = cosine_rows(member_vectors, centroid)
    order = sorted(range(len(member_ids)), key=lambda i: (-scores[i], member_ids[i]))
    return [member_ids[i] for i in order[:k]]


@dataclass
class StructScaler:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, struct: np.ndarray) -> "StructScaler":
        scaler = StandardScaler().fit(struct)
        return cls(mean=np.asarray(scaler.mean_, dtype=np.float64), scale=np.asarray(scaler.scale_, dtype=np.float64))

    def transform(self, struct: np.ndarray) -> np.ndarray:
        return (np.asarray(struct, dtype=np.float64) - self.mean) / self.scale


@dataclass
class ClusterFamily:
    """One hyperedge family: K clusters over one feature type, with typical nodes per cluster."""

    feature_type: str
    assignments: Dict[str, int]
    centroids: np.ndarray
    typical: List[List[str]]

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    def members(self, cluster: int) -> List[str]:
        return [tid for tid, c in self.assignments.items() if c == cluster]

    def sizes(self) -> List[int]:
        counts = np.bincount(np.fromiter(self.assignments.values(), dtype=np.int64), minlength=self.K)
        return [int(c) for c in counts]


@dataclass
class IndexParams:
    K: int
    k: int
    embedder_dimension: int
    structural_dimension: int
    vocabulary_digest: str
    seed: int = 0
    family_K: Dict[str, int] = field(default_factory=dict)
    embedder_endpoint: str = ""


@dataclass
class HypergraphIndex:
    format_version: int
    params: IndexParams
    families: Dict[str, ClusterFamily]
    features: FeatureSet
    struct_scaler: StructScaler
    corpus_digest: str
    _spaces: Dict[str, Matrix] = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def table_ids(self) -> List[str]:
        return self.features.table_ids

    @property
    def vectorizer(self) -> HeuristicVectorizer:
        return self.features.vectorizer

    def family_vectors(self, feature_type: str) -> Matrix:
        """Node vectors in the space the family was clustered in (row-aligned with table_ids)."""
        if feature_type not in self._spaces:
            self._spaces[feature_type] = family_space(feature_type, self.features, self.struct_scaler)
        return self._spaces[feature_type]


def family_space(feature_type: str, features: FeatureSet, scaler: StructScaler) -> Matrix:
    # unit-normalized sem/heur make Euclidean k-means agree with cosine; struct counts are z-scored
    if feature_type == "sem":
        return normalize(features.sem, norm="l2")
    if feature_type == "struct":
        return scaler.transform(features.struct)
    if feature_type == "heur":
        return normalize(sparse.csr_matrix(features.heur), norm="l2")
    raise ValueError(f"Unknown feature type {feature_type!r}")


def build_family(
    feature_type: str, table_ids: List[str], vectors: Matrix, K: int, k: int, seed: int, max_iter: int = 100
) -> ClusterFamily:
    start = time.time()
    result = kmeans(vectors, K, seed=seed, max_iter=max_iter, family=feature_type)
    typical = []
    for cluster in range(K):
        rows = np.flatnonzero(result.assignments == cluster)
        member_ids = [table_ids[i] for i in rows]
        typical.append(select_typical(member_ids, vectors[rows], result.centroids[cluster], k))
    logger.info(
        f"[{feature_type}] {K} clusters, inertia {result.inertia:.4f}, {result.n_iter} iterations "
        f"in {time.time() - start:.2f}s"
    )
    return ClusterFamily(
        feature_type=feature_type,
        assignments={tid: int(c) for tid, c in zip(table_ids, result.assignments)},
        centroids=result.centroids,
        typical=typical,
    )


def build_index(
    corpus: TableCorpus,
    features: FeatureSet,
    K: int = 10,
    k: int = 100,
    seed: int = 0,
    family_K: Optional[Dict[str, int]] = None,
    max_iter: int = 100,
    embedder_endpoint: str = "",
) -> HypergraphIndex:
    """Cluster the corpus once per feature type and keep each cluster's typical nodes."""
    if K < 1 or k < 1:
        raise ValueError(f"K and k must be >= 1 (got K={K}, k={k})")
    missing = [tid for tid in corpus.ids() if tid not in features]
    if missing or len(features) != len(corpus):
        raise ValueError(f"Features do not cover the corpus; missing e.g. {missing[:3]}")

    per_family = {phi: (family_K or {}).get(phi) or K for phi in FAMILIES}
    scaler = StructScaler.fit(features.struct)
    families = {}
    for phi in FAMILIES:
        vectors = family_space(phi, features, scaler)
        families[phi] = build_family(phi, features.table_ids, vectors, per_family[phi], k, seed, max_iter)

    params = IndexParams(
        K=K,
        k=k,
        embedder_dimension=int(features.sem.shape[1]),
        structural_dimension=STRUCTURAL_DIMENSION,
        vocabulary_digest=features.vectorizer.digest(),
        seed=seed,
        family_K=per_family,
        embedder_endpoint=embedder_endpoint,
    )
    return HypergraphIndex(
        format_version=INDEX_FORMAT_VERSION,
        params=params,
        families=families,
        features=features,
        struct_scaler=scaler,
        corpus_digest=corpus_digest(corpus),
    )


def _encode_array(arr: np.ndarray, dtype: str = "<f8") -> Dict:
    data = np.ascontiguousarray(arr, dtype=dtype)
    return {"dtype": dtype, "shape": list(data.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode_array(obj: Dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()


def dumps_index(ix: HypergraphIndex) -> bytes:
    """Uncompressed container: magic line, JSON header line, JSON body line."""
    header = {
        "format_version": ix.format_version,
        "params": ix.params.__dict__,
        "corpus_digest": ix.corpus_digest,
        "families": list(ix.families),
        "n_tables": len(ix.table_ids),
    }
    heur = sparse.csr_matrix(ix.features.heur)
    body = {
        "table_ids": ix.table_ids,
        "features": {
            "sem": _encode_array(ix.features.sem),
            "struct": _encode_array(ix.features.struct),
            "heur": {
                "shape": list(heur.shape),
                "data": _encode_array(heur.data),
                "indices": _encode_array(heur.indices, "<i8"),
                "indptr": _encode_array(heur.indptr, "<i8"),
            },
        },
        "vectorizer": {
            "terms": ix.vectorizer.terms(),
            "idf": _encode_array(ix.vectorizer.idf),
            "doc_count": ix.vectorizer.doc_count,
        },
        "struct_scaler": {"mean": _encode_array(ix.struct_scaler.mean), "scale": _encode_array(ix.struct_scaler.scale)},
        "families": {
            phi: {
                "assignments": [fam.assignments[tid] for tid in ix.table_ids],
                "centroids": _encode_array(fam.centroids),
                "typical": fam.typical,
            }
            for phi, fam in ix.families.items()
        },
    }
    dump = lambda obj: json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return INDEX_MAGIC + dump(header) + b"\n" + dump(body) + b"\n"


def save_index(ix: HypergraphIndex, path: str) -> str:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = dumps_index(ix)
    try:
        with open(out, "wb") as f:
            # fixed mtime and empty name keep the file byte-identical across runs
            with gzip.GzipFile(filename="", mode="wb", fileobj=f, mtime=0) as gz:
                gz.write(payload)
    except OSError as e:
        raise IOFailure(str(path), str(e))
    logger.info(f"Index saved at: {out} ({out.stat().st_size} bytes)")
    return str(out)


def _parse_payload(payload: bytes, path: str) -> Tuple[Dict, Dict]:
    if not payload.startswith(INDEX_MAGIC):
        raise IOFailure(path, "not an index file (bad magic)")
    lines = payload[len(INDEX_MAGIC):].split(b"\n")
    if len(lines) < 2 or not lines[1]:
        raise IOFailure(path, "index body missing (truncated file?)")
    header = json.loads(lines[0])
    if header.get("format_version") != INDEX_FORMAT_VERSION:
        raise VersionMismatch(header.get("format_version"), INDEX_FORMAT_VERSION)
    if not header.get("corpus_digest"):
        raise IOFailure(path, "index has no corpus digest")
    return header, json.loads(lines[1])


def load_index(path: str) -> HypergraphIndex:
    """Load an index saved by save_index. Refuses other format versions and digest-free files."""
    source = Path(path)
    try:
        with gzip.open(source, "rb") as gz:
            payload = gz.read()
        header, body = _parse_payload(payload, str(path))
        table_ids = body["table_ids"]
        f = body["features"]
        heur_obj = f["heur"]
        heur = sparse.csr_matrix(
            (_decode_array(heur_obj["data"]), _decode_array(heur_obj["indices"]), _decode_array(heur_obj["indptr"])),
            shape=tuple(heur_obj["shape"]),
        )
        terms = body["vectorizer"]["terms"]
        vectorizer = HeuristicVectorizer(
            vocabulary={term: i for i, term in enumerate(terms)},
            idf=_decode_array(body["vectorizer"]["idf"]),
            doc_count=int(body["vectorizer"]["doc_count"]),
        )
        features = FeatureSet(
            table_ids=table_ids,
            sem=_decode_array(f["sem"]),
            struct=_decode_array(f["struct"]),
            heur=heur,
            vectorizer=vectorizer,
        )
        families = {
            phi: ClusterFamily(
                feature_type=phi,
                assignments={tid: int(c) for tid, c in zip(table_ids, fam["assignments"])},
                centroids=_decode_array(fam["centroids"]),
                typical=[list(t) for t in fam["typical"]],
            )
            for phi, fam in body["families"].items()
        }
        scaler = StructScaler(
            mean=_decode_array(body["struct_scaler"]["mean"]),
            scale=_decode_array(body["struct_scaler"]["scale"]),
        )
        params = IndexParams(**header["params"])
    except (OSError, EOFError, zlib.error, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise IOFailure(str(path), f"unreadable index: {e}")
    except (KeyError, TypeError, ValueError) as e:
        raise IOFailure(str(path), f"malformed index: {e}")

    if set(families) != set(FAMILIES):
        raise IOFailure(str(path), f"index must hold the families {FAMILIES}, found {sorted(families)}")
    logger.info(f"Index loaded from {source}: {len(table_ids)} tables, K={params.K}, k={params.k}")
    return HypergraphIndex(
        format_version=header["format_version"],
        params=params,
        families=families,
        features=features,
        struct_scaler=scaler,
        corpus_digest=header["corpus_digest"],
    )
