from typing import List, Optional


class TableRetrievalError(Exception):
    """Base class for every error raised by the retrieval pipeline."""


class UsageError(TableRetrievalError):
    pass


class IOFailure(TableRetrievalError):
    def __init__(self, path: str, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class SchemaViolation(TableRetrievalError):
    """Raised by corpus loading with every violation found in the file."""

    def __init__(self, violations: List):
        self.violations = list(violations)
        first = self.violations[0] if self.violations else None
        summary = f"{first.table_id}: {first.reason}" if first else "unknown violation"
        more = f" (+{len(self.violations) - 1} more)" if len(self.violations) > 1 else ""
        super().__init__(f"Schema violation {summary}{more}")


class InvalidQuery(TableRetrievalError, ValueError):
    pass


class EmptyCorpus(TableRetrievalError):
    pass


class EmbedderUnavailable(TableRetrievalError):
    def __init__(
        self,
        endpoint: str,
        cause: str,
        batch_index: Optional[int] = None,
        table_id: Optional[str] = None,
    ):
        self.endpoint = endpoint
        self.cause = cause
        self.batch_index = batch_index
        self.table_id = table_id
        where = f" (batch {batch_index})" if batch_index is not None else ""
        table = f" at table {table_id}" if table_id is not None else ""
        super().__init__(f"Embedder {endpoint} unavailable{where}{table}: {cause}")


class DimensionMismatch(TableRetrievalError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"Expected vectors of dimension {expected}, got {got}")


class KTooLarge(TableRetrievalError):
    def __init__(self, K: int, n_points: int, family: Optional[str] = None):
        self.K = K
        self.n_points = n_points
        self.family = family
        prefix = f"[{family}] " if family else ""
        super().__init__(f"{prefix}K={K} exceeds the number of points ({n_points})")


class VersionMismatch(TableRetrievalError):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"Index format version {found} does not match expected {expected}")


class TooFewRows(TableRetrievalError):
    pass


class TooFewCols(TableRetrievalError):
    pass


class TooFewQueries(TableRetrievalError):
    pass


class MissingAnswerTags(TableRetrievalError):
    def __init__(self, excerpt: str):
        self.excerpt = excerpt
        super().__init__(f"No <answer>...</answer> block in response: {excerpt!r}")


class EmptyGold(TableRetrievalError):
    pass


class GeneratorUnavailable(TableRetrievalError):
    def __init__(self, endpoint: str, cause: str):
        self.endpoint = endpoint
        self.cause = cause
        super().__init__(f"Generator {endpoint} unavailable: {cause}")
