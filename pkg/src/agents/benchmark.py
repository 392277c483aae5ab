from typing import List

from src.models import Query, TableCorpus
from src.tools.benchmark_tools import BenchmarkConfig, BenchmarkDataset, build_benchmark, save_benchmark


class BenchmarkAgent:
    """
    Benchmark Agent: builds the multi-table dataset from single-table sources and their queries.
    Can be used as a CLI step or standalone.
    """

    def __init__(self, config: BenchmarkConfig):
        self.config = config

    def run(self, sources: TableCorpus, queries: List[Query], out_dir: str = None) -> BenchmarkDataset:
        dataset = build_benchmark(sources, queries, self.config)
        if out_dir:
            dataset.summary["paths"] = save_benchmark(dataset, out_dir)
        return dataset

