import logging
import time
from typing import Optional

from src.models import TableCorpus
from src.tools.embedding_tools import EmbedderHandle
from src.tools.feature_tools import extract_all
from src.tools.hypergraph_tools import HypergraphIndex, build_index
from src.utils.config import RunConfig
from src.utils.timing import StageTimer

logger = logging.getLogger(__name__)


class IndexingAgent:
    """
    Indexing Agent: extracts the three feature types of every table and clusters them into
    the hypergraph index. The whole build is timed as the "table_to_graph" stage.
    """

    def __init__(self, config: RunConfig, timer: Optional[StageTimer] = None):
        self.config = config
        self.embedder = EmbedderHandle.from_config(config)
        self.timer = timer or StageTimer(config.timers)

    def run(self, corpus: TableCorpus) -> HypergraphIndex:
        start = time.time()
        with self.timer.stage("table_to_graph"):
            features = extract_all(corpus, self.embedder)
            ix = build_index(
                corpus,
                features,
                K=self.config.K,
                k=self.config.k,
                seed=self.config.seed,
                family_K=self.config.family_K(),
                max_iter=self.config.kmeans_max_iter,
                embedder_endpoint=self.embedder.endpoint,
            )
        logger.info(f"Index over {len(corpus)} tables built in {time.time() - start:.2f}s")
        return ix

