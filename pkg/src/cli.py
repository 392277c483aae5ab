import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.agents.benchmark import BenchmarkAgent
from src.agents.evaluation import run_e2e_eval, run_retrieval_eval
from src.agents.indexing import IndexingAgent
from src.agents.retrieval import STAGES, RetrievalAgent
from src.data_loader import SUPPORTED_FORMATS, corpus_digest, ingest, load_corpus, load_queries
from src.errors import IOFailure, TableRetrievalError, UsageError
from src.tools.benchmark_tools import BenchmarkConfig, load_examples
from src.tools.generation_tools import make_generator
from src.tools.hypergraph_tools import load_index, save_index
from src.tools.visualization_tools import VisualizationTool
from src.utils.config import RunConfig, load_run_config
from src.utils.logs import setup_logging
from src.utils.report_render import render_html_report, render_text_table, save_html_report

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# argparse dest -> RunConfig field, for every flag that feeds the run configuration
CONFIG_FLAGS = (
    "K", "k", "K_sem", "K_struct", "K_heur", "alpha", "tau", "epsilon", "max_iter", "kmeans_max_iter",
    "top_n", "seed", "embedder", "embedder_dimension", "batch_limit", "max_in_flight", "generator",
    "families", "ks", "acc_mode", "workers", "timers",
)


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _families(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig values (flags take precedence)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-timers", dest="timers", action="store_const", const=False)


def _add_embedder(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embedder", help='embedding endpoint, or "builtin:hash"')
    p.add_argument("--embedder-dimension", dest="embedder_dimension", type=int)
    p.add_argument("--batch-limit", dest="batch_limit", type=int)
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int)


def _add_retrieval(p: argparse.ArgumentParser) -> None:
    p.add_argument("--index", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--top-n", dest="top_n", type=int)
    p.add_argument("--families", type=_families, help="comma-separated subset of sem,struct,heur")
    _add_embedder(p)


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="table-retrieval", allow_abbrev=False, description="Multi-table retrieval over a hypergraph index.")
    parser.add_argument("--log-level", dest="log_level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("ingest", allow_abbrev=False, help="convert a corpus to the canonical JSONL format")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=SUPPORTED_FORMATS, default="jsonl")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-index", allow_abbrev=False, help="build the hypergraph index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=SUPPORTED_FORMATS, default="jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--K", dest="K", type=int)
    p.add_argument("--k", dest="k", type=int)
    p.add_argument("--K-sem", dest="K_sem", type=int)
    p.add_argument("--K-struct", dest="K_struct", type=int)
    p.add_argument("--K-heur", dest="K_heur", type=int)
    p.add_argument("--kmeans-max-iter", dest="kmeans_max_iter", type=int)
    p.add_argument("--chart", help="directory for the cluster-size chart")
    _add_common(p)
    _add_embedder(p)

    p = sub.add_parser("retrieve", allow_abbrev=False, help="retrieve tables for one query")
    p.add_argument("--query", required=True)
    p.add_argument("--stage", choices=STAGES, default="full")
    _add_retrieval(p)
    _add_common(p)

    p = sub.add_parser("build-benchmark", allow_abbrev=False, help="build the multi-table benchmark")
    p.add_argument("--sources", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--format", choices=SUPPORTED_FORMATS, default="jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--example-queries", dest="example_queries", type=int, default=0)
    p.add_argument("--test-per-task", dest="test_per_task", type=int, default=1000)
    p.add_argument("--stopword-ratio", dest="stopword_ratio", type=float, default=0.7)
    p.add_argument("--min-tokens", dest="min_tokens", type=int, default=5)
    p.add_argument("--redundancy", type=float, default=0.9)
    _add_common(p)

    for name, help_text in (("eval-retrieval", "Acc@k / Recall@k over a benchmark"), ("eval-e2e", "end-to-end EM / F1")):
        p = sub.add_parser(name, allow_abbrev=False, help=help_text)
        p.add_argument("--examples", required=True)
        p.add_argument("--split", choices=("test", "train", "all"), default="test")
        p.add_argument("--limit", type=int)
        p.add_argument("--out", help="write the JSON report to this file")
        p.add_argument("--report-html", dest="report_html")
        p.add_argument("--table", action="store_true", help="print a human-readable table instead of JSON")
        _add_retrieval(p)
        _add_common(p)
    eval_retrieval, eval_e2e = sub.choices["eval-retrieval"], sub.choices["eval-e2e"]
    eval_retrieval.add_argument("--ks", type=int, nargs="+")
    eval_retrieval.add_argument("--acc-mode", dest="acc_mode", choices=("all", "any"))
    eval_retrieval.add_argument("--chart", help="directory for the Acc@k / Recall@k chart")
    eval_e2e.add_argument("--corpus", required=True)
    eval_e2e.add_argument("--generator")
    eval_e2e.add_argument("--no-graph-info", dest="graph_info", action="store_false")
    eval_e2e.add_argument("--no-long-cot", dest="long_cot", action="store_false")

    p = sub.add_parser("inspect", allow_abbrev=False, help="summarize an index")
    p.add_argument("--index", required=True)
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name) for name in CONFIG_FLAGS if hasattr(args, name)}
    config = load_run_config(getattr(args, "config", None), overrides)
    logger.info(f"Resolved configuration: {json.dumps(config.to_dict(), sort_keys=True)}")
    return config


def _emit(payload: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")


def _select_examples(args: argparse.Namespace):
    examples = load_examples(args.examples)
    if args.split != "all":
        examples = [e for e in examples if e.split == args.split]
    if args.limit is not None:
        examples = examples[: args.limit]
    logger.info(f"{len(examples)} examples selected (split={args.split})")
    return examples


def _write_report(args: argparse.Namespace, report: Dict[str, Any], chart_path: Optional[str] = None) -> None:
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.report_html:
        save_html_report(render_html_report(report, chart_path=chart_path), args.report_html)
    if args.table:
        sys.stdout.write(render_text_table(report) + "\n")
    else:
        _emit(report)


def cmd_ingest(args: argparse.Namespace) -> None:
    corpus, path = ingest(args.input, args.format, args.out)
    _emit({"tables": len(corpus), "out": path, "source_tag": corpus.source_tag, "corpus_digest": corpus_digest(corpus)})


def cmd_build_index(args: argparse.Namespace) -> None:
    config = _run_config(args)
    corpus = load_corpus(args.corpus, args.format)
    agent = IndexingAgent(config)
    ix = agent.run(corpus)
    save_index(ix, args.out)
    if args.chart:
        VisualizationTool(args.chart).create_cluster_size_chart(ix)
    _emit({"out": args.out, "tables": len(corpus), "families": {phi: f.sizes() for phi, f in ix.families.items()}, "timings": agent.timer.durations})


def cmd_retrieve(args: argparse.Namespace) -> None:
    config = _run_config(args)
    ix = load_index(args.index)
    _emit(RetrievalAgent(ix, config).run(args.query, stage=args.stage))


def cmd_build_benchmark(args: argparse.Namespace) -> None:
    config = _run_config(args)
    bench_config = BenchmarkConfig(
        seed=config.seed,
        stopword_ratio=args.stopword_ratio,
        min_tokens=args.min_tokens,
        redundancy=args.redundancy,
        example_queries=args.example_queries,
        test_per_task=args.test_per_task,
        workers=config.workers,
    )
    sources = load_corpus(args.sources, args.format)
    dataset = BenchmarkAgent(bench_config).run(sources, load_queries(args.queries), args.out)
    sys.stderr.write(dataset.stats.to_string() + "\n")
    _emit(dataset.summary)


def cmd_eval_retrieval(args: argparse.Namespace) -> None:
    config = _run_config(args)
    ix = load_index(args.index)
    report = run_retrieval_eval(_select_examples(args), ix, config, config.ks)
    chart_path = None
    if args.chart:
        chart_path = VisualizationTool(args.chart).create_recall_chart(report)["image_path"]
    _write_report(args, report.to_dict(), chart_path)


def cmd_eval_e2e(args: argparse.Namespace) -> None:
    config = _run_config(args)
    ix = load_index(args.index)
    corpus = load_corpus(args.corpus)
    if corpus_digest(corpus) != ix.corpus_digest:
        raise IOFailure(args.corpus, "corpus does not match the corpus the index was built from")
    generator = make_generator(config.generator)
    report = run_e2e_eval(
        _select_examples(args), ix, corpus, config, generator, graph_info=args.graph_info, long_cot=args.long_cot
    )
    _write_report(args, report.to_dict())


def cmd_inspect(args: argparse.Namespace) -> None:
    ix = load_index(args.index)
    families = {}
    for phi, family in ix.families.items():
        sizes = family.sizes()
        families[phi] = {
            "K": family.K,
            "cluster_sizes": sizes,
            "size_min": int(np.min(sizes)),
            "size_max": int(np.max(sizes)),
            "size_mean": round(float(np.mean(sizes)), 3),
            "typical_lengths": [len(t) for t in family.typical],
        }
    _emit(
        {
            "format_version": ix.format_version,
            "params": ix.params.__dict__,
            "corpus_digest": ix.corpus_digest,
            "n_tables": len(ix.table_ids),
            "families": families,
        }
    )


COMMANDS = {
    "ingest": cmd_ingest,
    "build-index": cmd_build_index,
    "retrieve": cmd_retrieve,
    "build-benchmark": cmd_build_benchmark,
    "eval-retrieval": cmd_eval_retrieval,
    "eval-e2e": cmd_eval_e2e,
    "inspect": cmd_inspect,
}


def _fail(error: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(error).__name__, "message": str(error)}, ensure_ascii=False) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand, and map failures to exit codes (0 ok, 1 runtime, 2 usage)."""
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level)
        COMMANDS[args.command](args)
    except UsageError as e:
        return _fail(e, EXIT_USAGE)
    except (TableRetrievalError, OSError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return _fail(e, EXIT_RUNTIME)
    return EXIT_OK
