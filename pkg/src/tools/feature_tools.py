import hashlib
import logging
import re
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Union

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import CountVectorizer, TfidfVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from src.errors import EmbedderUnavailable, EmptyCorpus
from src.models import TableCorpus
from src.tools.embedding_tools import EmbedderHandle, embed_semantic
from src.tools.linearizer_tools import linearize
from src.utils.text import STOPWORDS, tokenize

logger = logging.getLogger(__name__)

TAG_CLASSES = ["NUM", "PROPN", "PUNCT", "SYM", "STOP", "VERB", "ADJ", "OTHER"]
PUNCTUATION_MARKS = [",", ".", ";", ":", "?", "!", "(", ")"]
STRUCTURAL_FIELDS = (
    ["total_tokens", "unique_tokens", "characters", "digit_tokens"]
    + [f"tag_{name.lower()}" for name in TAG_CLASSES]
    + [f"punct_{name}" for name in ("comma", "period", "semicolon", "colon", "question", "exclamation", "lparen", "rparen")]
)
STRUCTURAL_DIMENSION = len(STRUCTURAL_FIELDS)

_STRUCT_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_PUNCT_CHARS = frozenset(".,;:!?'\"()[]{}-")
_SENTENCE_END = frozenset(".!?")
_ADJ_SUFFIXES = ("able", "ous", "ive", "al")
_VERB_SUFFIXES = ("ing", "ed", "s")

Vector = Union[np.ndarray, sparse.spmatrix]


def tag_token(token: str, sentence_initial: bool) -> str:
    """Deterministic 8-class rule tagger; the first matching rule wins."""
    if token.isdigit():
        return "NUM"
    if len(token) == 1 and token in _PUNCT_CHARS:
        return "PUNCT"
    if not any(ch.isalnum() for ch in token):
        return "SYM"
    lowered = token.lower()
    if lowered in STOPWORDS:
        return "STOP"
    if token[0].isupper() and not sentence_initial:
        return "PROPN"
    if lowered.endswith(_ADJ_SUFFIXES):
        return "ADJ"
    if lowered.endswith(_VERB_SUFFIXES):
        return "VERB"
    return "OTHER"


def extract_structural(text: str) -> np.ndarray:
    """Fixed-order structural signature of a text; see STRUCTURAL_FIELDS for the layout."""
    tokens = _STRUCT_TOKEN_RE.findall(text)
    vector = np.zeros(STRUCTURAL_DIMENSION, dtype=np.float64)
    vector[0] = len(tokens)
    vector[1] = len(set(tokens))
    vector[2] = len(text)
    vector[3] = sum(1 for tok in tokens if any(ch.isdigit() for ch in tok))

    tag_offset = 4
    previous = None
    for token in tokens:
        sentence_initial = previous is None or previous in _SENTENCE_END
        vector[tag_offset + TAG_CLASSES.index(tag_token(token, sentence_initial))] += 1
        previous = token

    punct_offset = tag_offset + len(TAG_CLASSES)
    for i, mark in enumerate(PUNCTUATION_MARKS):
        vector[punct_offset + i] = text.count(mark)
    return vector


@dataclass
class HeuristicVectorizer:
    """Fitted TF-IDF state: lexicographic vocabulary, smoothed idf and the number of fitted documents."""

    vocabulary: Dict[str, int]
    idf: np.ndarray
    doc_count: int
    _counter: Optional[CountVectorizer] = field(default=None, init=False, repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return len(self.vocabulary)

    def terms(self) -> List[str]:
        return sorted(self.vocabulary, key=self.vocabulary.get)

    def transform(self, texts: List[str]) -> sparse.csr_matrix:
        if not self.vocabulary:
            return sparse.csr_matrix((len(texts), 0), dtype=np.float64)
        if self._counter is None:
            self._counter = CountVectorizer(
                vocabulary=self.vocabulary, tokenizer=tokenize, token_pattern=None, lowercase=False
            )
        counts = self._counter.transform(texts).astype(np.float64)
        return sparse.csr_matrix(counts.multiply(self.idf.reshape(1, -1)))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.terms()).encode("utf-8"))
        h.update(np.ascontiguousarray(self.idf, dtype="<f8").tobytes())
        return h.hexdigest()


def fit_heuristic(corpus_texts: List[str]) -> HeuristicVectorizer:
    """idf(t) = ln((1 + D) / (1 + df(t))) + 1 over lowercased word tokens."""
    if not corpus_texts:
        raise EmptyCorpus("Cannot fit the heuristic vectorizer on zero documents")
    tfidf = TfidfVectorizer(
        tokenizer=tokenize,
        token_pattern=None,
        lowercase=False,
        norm=None,
        smooth_idf=True,
        sublinear_tf=False,
    )
    try:
        tfidf.fit(corpus_texts)
    except ValueError:
        # every document is free of word tokens
        logger.warning("Heuristic vocabulary is empty; heuristic vectors will be zero-dimensional.")
        return HeuristicVectorizer(vocabulary={}, idf=np.zeros(0), doc_count=len(corpus_texts))
    vocabulary = {term: int(index) for term, index in tfidf.vocabulary_.items()}
    return HeuristicVectorizer(vocabulary=vocabulary, idf=np.asarray(tfidf.idf_, dtype=np.float64), doc_count=len(corpus_texts))


def transform_heuristic(v: HeuristicVectorizer, text: str) -> sparse.csr_matrix:
    return v.transform([text])


def _dense(x: Vector) -> np.ndarray:
    if sparse.issparse(x):
        return np.asarray(x.toarray(), dtype=np.float64).ravel()
    return np.asarray(x, dtype=np.float64).ravel()


def representative_score(a: Vector, b: Vector) -> float:
    """Cosine between two same-type feature vectors; 0.0 when either is the zero vector."""
    a, b = _dense(a), _dense(b)
    if a.shape != b.shape:
        raise ValueError(f"Dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / norm, -1.0, 1.0))


def cosine_rows(matrix: Vector, vector: Vector) -> np.ndarray:
    """Representative score of every row of `matrix` against one vector (zero rows score 0)."""
    if sparse.issparse(vector):
        query = sparse.csr_matrix(vector).reshape(1, -1)
    else:
        query = np.asarray(vector, dtype=np.float64).reshape(1, -1)
    if matrix.shape[0] == 0:
        return np.zeros(0)
    return np.clip(cosine_similarity(matrix, query).ravel(), -1.0, 1.0)


@dataclass
class NodeFeatures:
    sem: np.ndarray
    struct_: np.ndarray
    heur: sparse.csr_matrix


@dataclass
class FeatureSet:
    """Row-aligned feature matrices for a corpus, readable as a map table_id -> NodeFeatures."""

    table_ids: List[str]
    sem: np.ndarray
    struct: np.ndarray
    heur: sparse.csr_matrix
    vectorizer: HeuristicVectorizer
    _rows: Dict[str, int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._rows = {tid: i for i, tid in enumerate(self.table_ids)}

    def row(self, table_id: str) -> int:
        return self._rows[table_id]

    def rows(self, table_ids: List[str]) -> List[int]:
        return [self._rows[t] for t in table_ids]

    def __getitem__(self, table_id: str) -> NodeFeatures:
        i = self._rows[table_id]
        return NodeFeatures(sem=self.sem[i], struct_=self.struct[i], heur=self.heur[i])

    def __contains__(self, table_id: object) -> bool:
        return table_id in self._rows

    def __len__(self) -> int:
        return len(self.table_ids)

    def __iter__(self) -> Iterator[str]:
        return iter(self.table_ids)

    def keys(self) -> List[str]:
        return list(self.table_ids)


def extract_all(corpus: TableCorpus, h: EmbedderHandle) -> FeatureSet:
    """
    Compute (sem, struct, heur) for every table of the corpus.

    The heuristic vectorizer is fitted over the whole linearized corpus before any document is
    transformed. An embedder failure aborts the build and names the first table of the failing batch.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("Cannot extract features from an empty corpus")
    start = time.time()
    table_ids = corpus.ids()
    texts = [linearize(t).sequence for t in corpus]

    vectorizer = fit_heuristic(texts)
    heur = vectorizer.transform(texts)
    struct = np.vstack([extract_structural(text) for text in texts])

    try:
        sem = embed_semantic(texts, h)
    except EmbedderUnavailable as e:
        failed = table_ids[(e.batch_index or 0) * h.batch_limit]
        logger.error(f"Embedding failed at table {failed}: {e.cause}")
        raise EmbedderUnavailable(e.endpoint, e.cause, batch_index=e.batch_index, table_id=failed)

    logger.info(
        f"Features for {len(table_ids)} tables: sem={sem.shape[1]}, struct={struct.shape[1]}, "
        f"heur={heur.shape[1]} in {time.time() - start:.2f}s"
    )
    return FeatureSet(table_ids=table_ids, sem=sem, struct=struct, heur=heur, vectorizer=vectorizer)
