import concurrent.futures
import logging
import time
from typing import List, Optional, Sequence

import numpy as np

from src.agents.retrieval import RetrievalAgent
from src.graph_workflow import QAWorkflow
from src.models import TableCorpus
from src.tools.benchmark_tools import BenchmarkExample
from src.tools.eval_tools import AnswerReport, RetrievalReport, evaluate_rankings, latency_report, summarize_answers
from src.tools.generation_tools import Generator
from src.tools.hypergraph_tools import HypergraphIndex
from src.utils.config import RunConfig
from src.utils.timing import StageTimer

logger = logging.getLogger(__name__)


class EvaluationAgent:
    """
    Evaluation Agent: runs retrieval (and optionally generation) over benchmark examples and
    aggregates the metrics. Examples are processed by a bounded thread pool; results keep input order.
    """

    def __init__(self, ix: HypergraphIndex, config: RunConfig, timer: Optional[StageTimer] = None):
        self.ix = ix
        self.config = config
        self.timer = timer or StageTimer(config.timers)

    def _map(self, fn, items: Sequence) -> List:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, self.config.workers)) as executor:
            return list(executor.map(fn, items))

    def run_retrieval(self, examples: List[BenchmarkExample], ks: Optional[Sequence[int]] = None) -> RetrievalReport:
        ks = sorted(set(ks or self.config.ks))
        agent = RetrievalAgent(self.ix, self.config, top_n=max(ks))
        start = time.time()
        logger.info(f"=== Retrieval evaluation over {len(examples)} examples, ks={ks} ===")
        outputs = self._map(lambda e: agent.retrieve(e.query, stage="full"), examples)

        for _, _, timings in outputs:
            self.timer.merge(timings)
        report = evaluate_rankings(
            [result.ranked_ids for _, result, _ in outputs],
            [e.gold_table_ids for e in examples],
            ks=ks,
            task_types=[e.query.task_type.value for e in examples],
            acc_mode=self.config.acc_mode,
        )
        if outputs:
            report.mean_coarse_retained = float(np.mean([len(c.union_ids) for c, _, _ in outputs]))
            report.mean_retained_fraction = float(np.mean([c.retained_fraction for c, _, _ in outputs]))
            report.coarse_hit_rate = float(
                np.mean([len(set(e.gold_table_ids) & c.union_ids) / len(e.gold_table_ids) for e, (c, _, _) in zip(examples, outputs)])
            )
        report.latency = latency_report(self.timer)
        logger.info(f"Retrieval evaluation finished in {time.time() - start:.2f}s")
        return report

    def run_e2e(
        self,
        examples: List[BenchmarkExample],
        corpus: TableCorpus,
        generator: Generator,
        graph_info: bool = True,
        long_cot: bool = True,
    ) -> AnswerReport:
        workflow = QAWorkflow(RetrievalAgent(self.ix, self.config), corpus, generator, graph_info, long_cot)
        start = time.time()
        logger.info(f"=== End-to-end evaluation over {len(examples)} examples ===")
        states = self._map(lambda e: workflow.run(e.query), examples)
        for state in states:
            self.timer.merge(state.get("timings", {}))
        report = summarize_answers([state["record"] for state in states])
        logger.info(
            f"EM={report.em:.4f} F1={report.f1:.4f} (NA={report.n_na}, parse failures={report.n_parse_failures}) "
            f"in {time.time() - start:.2f}s"
        )
        return report


def run_retrieval_eval(
    examples: List[BenchmarkExample], ix: HypergraphIndex, config: RunConfig, ks: Optional[Sequence[int]] = None
) -> RetrievalReport:
    return EvaluationAgent(ix, config).run_retrieval(examples, ks)


def run_e2e_eval(
    examples: List[BenchmarkExample],
    ix: HypergraphIndex,
    corpus: TableCorpus,
    config: RunConfig,
    generator: Generator,
    graph_info: bool = True,
    long_cot: bool = True,
) -> AnswerReport:
    return EvaluationAgent(ix, config).run_e2e(examples, corpus, generator, graph_info, long_cot)
