import random
from typing import List, Optional

import pytest

from src.models import Query, Table, TableCorpus, TaskType
from src.tools.embedding_tools import EmbedderHandle
from src.tools.feature_tools import extract_all
from src.tools.hypergraph_tools import build_index
from src.utils.config import RunConfig

TOPICS = {
    "football": ["club", "goals", "season", "league", "striker", "coach"],
    "music": ["album", "single", "chart", "band", "release", "label"],
    "cities": ["city", "population", "mayor", "district", "area", "census"],
}


def make_table(table_id: str, caption: str, headers: List[str], n_rows: int = 4, metadata: Optional[dict] = None) -> Table:
    entries = [[f"{h}-{r}" for h in headers] for r in range(n_rows)]
    return Table(id=table_id, caption=caption, headers=list(headers), entries=entries, metadata=metadata or {})


@pytest.fixture
def hash_handle():
    return EmbedderHandle()


@pytest.fixture
def toy_corpus() -> TableCorpus:
    """Twelve tables, four per topic, with topic-specific captions and headers."""
    tables = []
    for topic, words in TOPICS.items():
        for i in range(4):
            caption = f"{topic} {words[i]} {words[(i + 1) % len(words)]} records {i}"
            headers = [words[(i + j) % len(words)] for j in range(4)]
            tables.append(make_table(f"{topic}_{i}", caption, headers))
    return TableCorpus(tables, source_tag="toy")


@pytest.fixture
def toy_features(toy_corpus, hash_handle):
    return extract_all(toy_corpus, hash_handle)


@pytest.fixture
def toy_index(toy_corpus, toy_features):
    return build_index(toy_corpus, toy_features, K=3, k=2, seed=0)


@pytest.fixture
def run_config():
    return RunConfig(K=3, k=2, top_n=5, timers=True).validate()


def random_caption_corpus(n: int, seed: int = 0, vocabulary: int = 200) -> TableCorpus:
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocabulary)]
    tables = []
    for i in range(n):
        caption = " ".join(rng.sample(words, 4))
        headers = rng.sample(words, 3)
        tables.append(make_table(f"t{i:04d}", caption, headers, n_rows=2))
    return TableCorpus(tables, source_tag="random")


def qa_query(query_id: str, text: str, root: str, answer, task=TaskType.SINGLE_HOP) -> Query:
    return Query(id=query_id, text=text, task_type=task, gold_table_ids=[root], gold_answer=answer)
