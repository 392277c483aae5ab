import logging
import time
from dataclasses import replace
from typing import Dict, Optional, Tuple, Union

from src.models import Query
from src.tools.coarse_retrieval_tools import CoarseResult, coarse_retrieve, query_features
from src.tools.embedding_tools import EmbedderHandle
from src.tools.fine_retrieval_tools import PPRConfig, RetrievalResult, fine_retrieve
from src.tools.hypergraph_tools import HypergraphIndex
from src.utils.config import RunConfig

logger = logging.getLogger(__name__)

STAGES = ("coarse", "fine", "full")


class RetrievalAgent:
    """
    Retrieval Agent: coarse cluster selection followed by PageRank ranking over the candidates.
    Holds no per-query state, so one agent can serve concurrent queries.
    """

    def __init__(self, ix: HypergraphIndex, config: RunConfig, top_n: Optional[int] = None):
        self.ix = ix
        self.config = config
        # queries must be embedded in the index's space
        self.embedder = replace(EmbedderHandle.from_config(config), dimension=ix.params.embedder_dimension)
        self.ppr_config = PPRConfig(
            alpha=config.alpha,
            epsilon=config.epsilon,
            max_iter=config.max_iter,
            top_n=top_n or config.top_n,
        )
        if ix.params.embedder_endpoint and ix.params.embedder_endpoint != self.embedder.endpoint:
            logger.warning(
                f"Index was built with embedder {ix.params.embedder_endpoint}, "
                f"queries use {self.embedder.endpoint}"
            )

    def retrieve(self, query: Union[Query, str], stage: str = "full") -> Tuple[CoarseResult, Optional[RetrievalResult], Dict[str, float]]:
        """Returns the coarse result, the fine result (None for stage "coarse") and per-stage seconds."""
        if stage not in STAGES:
            raise ValueError(f"Unknown stage {stage!r}; expected one of {STAGES}")
        timings = {}
        start = time.perf_counter()
        qf = query_features(query, self.ix, self.embedder)
        coarse = coarse_retrieve(query, self.ix, self.embedder, families=self.config.families, qf=qf)
        timings["coarse"] = time.perf_counter() - start
        if stage == "coarse":
            return coarse, None, timings

        if stage == "fine":
            # rank the whole corpus without cluster filtering
            coarse = CoarseResult(
                per_family_choice={},
                union_ids=set(self.ix.table_ids),
                per_family_mean_scores={},
                corpus_size=len(self.ix.table_ids),
            )
        start = time.perf_counter()
        result = fine_retrieve(qf, coarse, self.ix, self.ppr_config, tau=self.config.tau)
        timings["fine"] = time.perf_counter() - start
        return coarse, result, timings

    def run(self, query: Union[Query, str], stage: str = "full") -> Dict:
        coarse, result, timings = self.retrieve(query, stage)
        output = {"stage": stage, "coarse": coarse.to_dict() if stage != "fine" else None}
        if result is not None:
            output.update(result.to_dict())
        output["timings"] = {name: round(seconds, 6) for name, seconds in timings.items()}
        return output

