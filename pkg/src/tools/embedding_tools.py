import concurrent.futures
import hashlib
import logging
import time
from dataclasses import dataclass
from typing import List

import numpy as np
import requests
from sklearn.feature_extraction.text import HashingVectorizer

from src.errors import DimensionMismatch, EmbedderUnavailable
from src.utils.text import tokenize

logger = logging.getLogger(__name__)

BUILTIN_HASH = "builtin:hash"


@dataclass(frozen=True)
class EmbedderHandle:
    """Where semantic vectors come from: a remote /embed service or the builtin hashing embedder."""

    endpoint: str = BUILTIN_HASH
    dimension: int = 256
    batch_limit: int = 64
    max_in_flight: int = 4
    timeout_seconds: float = 30.0

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError(f"Embedder dimension must be positive, got {self.dimension}")
        if self.batch_limit < 1 or self.max_in_flight < 1:
            raise ValueError("batch_limit and max_in_flight must be >= 1")

    @classmethod
    def from_config(cls, config) -> "EmbedderHandle":
        return cls(
            endpoint=config.embedder,
            dimension=config.embedder_dimension,
            batch_limit=config.batch_limit,
            max_in_flight=config.max_in_flight,
        )

    @property
    def is_builtin(self) -> bool:
        return self.endpoint == BUILTIN_HASH


def hash_embed(texts: List[str], dimension: int) -> np.ndarray:
    """
    Signed feature hashing of word uni- and bi-grams into `dimension` buckets, L2-normalized.
    A text whose hashed vector is all zeros (no word tokens, or full sign cancellation) gets a
    single unit bucket chosen from the SHA-1 of the raw text, so every output has unit norm.
    """
    vectorizer = HashingVectorizer(
        n_features=dimension,
        ngram_range=(1, 2),
        alternate_sign=True,
        norm="l2",
        tokenizer=tokenize,
        token_pattern=None,
        lowercase=False,
    )
    vectors = vectorizer.transform(texts).toarray().astype(np.float64)
    for i, text in enumerate(texts):
        if not np.any(vectors[i]):
            bucket = int(hashlib.sha1(text.encode("utf-8")).hexdigest(), 16) % dimension
            vectors[i, bucket] = 1.0
    return vectors


def _post_batch(h: EmbedderHandle, batch: List[str], batch_index: int) -> np.ndarray:
    try:
        response = requests.post(
            f"{h.endpoint.rstrip('/')}/embed",
            json={"texts": batch},
            timeout=h.timeout_seconds,
        )
    except requests.RequestException as e:
        raise EmbedderUnavailable(h.endpoint, str(e), batch_index=batch_index)
    if response.status_code != 200:
        raise EmbedderUnavailable(h.endpoint, f"HTTP {response.status_code}: {response.text[:200]}", batch_index=batch_index)
    try:
        body = response.json()
        vectors = np.asarray(body["vectors"], dtype=np.float64)
    except (ValueError, KeyError, TypeError) as e:
        raise EmbedderUnavailable(h.endpoint, f"malformed response: {e}", batch_index=batch_index)

    if vectors.ndim != 2 or vectors.shape[0] != len(batch):
        raise EmbedderUnavailable(h.endpoint, f"expected {len(batch)} vectors, got shape {vectors.shape}", batch_index=batch_index)
    declared = body.get("dimension", vectors.shape[1])
    if declared != h.dimension or vectors.shape[1] != h.dimension:
        raise DimensionMismatch(h.dimension, vectors.shape[1] if vectors.shape[1] != h.dimension else declared)
    return vectors


def embed_semantic(texts: List[str], h: EmbedderHandle) -> np.ndarray:
    """
    Embed texts in order, one row per text, honoring h.batch_limit.

    Remote batches are issued concurrently (at most h.max_in_flight at a time); the first failing
    batch, in input order, is the one reported.
    """
    if not texts:
        raise ValueError("embed_semantic needs at least one text")
    if any(not t for t in texts):
        raise ValueError("embed_semantic received an empty text")

    batches = [texts[i:i + h.batch_limit] for i in range(0, len(texts), h.batch_limit)]
    start = time.time()

    if h.is_builtin:
        vectors = np.vstack([hash_embed(batch, h.dimension) for batch in batches])
    else:
        logger.info(f"Embedding {len(texts)} texts in {len(batches)} batches via {h.endpoint}")
        with concurrent.futures.ThreadPoolExecutor(max_workers=min(h.max_in_flight, len(batches))) as executor:
            futures = [executor.submit(_post_batch, h, batch, i) for i, batch in enumerate(batches)]
            results = []
            for future in futures:
                results.append(future.result())
        vectors = np.vstack(results)

    logger.debug(f"{len(texts)} texts embedded in {time.time() - start:.2f}s")
    return vectors
