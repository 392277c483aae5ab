import concurrent.futures
import copy
import json
import logging
import random
import re
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from src.data_loader import save_corpus
from src.errors import IOFailure, TooFewCols, TooFewQueries, TooFewRows
from src.models import Query, Table, TableCorpus, TaskType
from src.utils.text import STOPWORDS, tokenize

logger = logging.getLogger(__name__)

MAX_PARTS = 3
CONNECTORS = ("AND", "Furthermore", "Based on [previous query]")

CAPTION_TEMPLATES = (
    "{c}",
    "Table of {c}",
    "Selected records from {c}",
    "Overview: {c}",
    "Excerpt of {c}",
    "{c} (partial listing)",
)

SYNONYMS = {
    "list": "listing",
    "results": "outcomes",
    "season": "campaign",
    "statistics": "figures",
    "election": "vote",
    "population": "inhabitants",
    "team": "squad",
    "members": "participants",
    "history": "record",
    "schedule": "fixtures",
    "number": "count",
    "winners": "champions",
    "records": "entries",
    "summary": "overview",
    "discography": "releases",
    "filmography": "film credits",
    "tournament": "competition",
    "league": "division",
    "city": "town",
    "album": "record release",
}

_CLAUSE_SEPARATORS = (" - ", ": ", ", ")
_SENTENCE_INITIAL = re.compile(r"(?:^|(?<=[.!?]\s))(this|that|these)\b", re.IGNORECASE)
_SENTENCE_INITIAL_INNER = re.compile(r"(?<=[.!?]\s)(this|that|these)\b", re.IGNORECASE)
_ANYWHERE = re.compile(r"\b(they|it)\b", re.IGNORECASE)
_SENTENCE_END_LAST = re.compile(r"\b(there|here)(?=\s*(?:[.!?]|$))", re.IGNORECASE)
_SENTENCE_END_INNER = re.compile(r"\b(there|here)(?=\s*[.!?])", re.IGNORECASE)


class SplitMode(str, Enum):
    NONE = "none"
    ROW = "row"
    COLUMN = "column"


class Difficulty(str, Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"

    @classmethod
    def from_parts(cls, parts: int) -> "Difficulty":
        return {1: cls.EASY, 2: cls.MEDIUM, 3: cls.HARD}[parts]


@dataclass(frozen=True)
class SplitPlan:
    mode: SplitMode
    parts: int
    seed: int

    def __post_init__(self):
        if self.parts not in (1, 2, 3):
            raise ValueError(f"parts must be 1, 2 or 3, got {self.parts}")
        if (self.parts == 1) != (self.mode is SplitMode.NONE):
            raise ValueError("a plan has mode 'none' exactly when it does not split")


@dataclass
class BenchmarkExample:
    query: Query
    gold_table_ids: List[str]
    difficulty: Difficulty
    root_table_id: str
    split: str = "test"

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.query.id,
            "text": self.query.text,
            "task_type": self.query.task_type.value,
            "gold_table_ids": sorted(self.gold_table_ids),
            "gold_answer": self.query.gold_answer,
            "difficulty": self.difficulty.value,
            "root_table_id": self.root_table_id,
            "split": self.split,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "BenchmarkExample":
        gold = [str(g) for g in record["gold_table_ids"]]
        query = Query(
            id=str(record["id"]),
            text=record["text"],
            task_type=record["task_type"],
            gold_table_ids=gold,
            gold_answer=record.get("gold_answer"),
        )
        return cls(
            query=query,
            gold_table_ids=gold,
            difficulty=Difficulty(record["difficulty"]),
            root_table_id=str(record["root_table_id"]),
            split=record.get("split", "test"),
        )


@dataclass
class BenchmarkConfig:
    seed: int = 0
    stopword_ratio: float = 0.7
    min_tokens: int = 5
    redundancy: float = 0.9
    example_queries: int = 0
    test_per_task: int = 1000
    workers: int = 1


@dataclass
class BenchmarkDataset:
    corpus: TableCorpus
    examples: List[BenchmarkExample]
    stats: pd.DataFrame
    summary: Dict[str, Any] = field(default_factory=dict)


def filter_small(corpus: TableCorpus) -> TableCorpus:
    """Drop tables that are small in both directions (at most 3 columns and at most 3 rows)."""
    kept = [t for t in corpus if not (t.n_cols <= 3 and t.n_rows <= 3)]
    logger.info(f"filter_small kept {len(kept)}/{len(corpus)} tables")
    return TableCorpus(kept, source_tag=corpus.source_tag)


def _sub_table(t: Table, suffix: str, headers: List[str], entries: List[List[str]], mode: SplitMode, part: int) -> Table:
    metadata = copy.deepcopy(t.metadata)
    metadata.update({"root_table_id": t.id, "split_mode": mode.value, "part": part})
    return Table(id=f"{t.id}{suffix}", caption=t.caption, headers=list(headers), entries=entries, metadata=metadata)


def split_rows(t: Table, n: int, seed: int) -> List[Table]:
    """Shuffle the rows, then cut them into n contiguous parts of near-equal size."""
    if n < 2:
        raise ValueError(f"split_rows needs n >= 2, got {n}")
    if n > t.n_rows:
        raise TooFewRows(f"Table {t.id} has {t.n_rows} rows, cannot split into {n}")
    order = np.random.default_rng(seed).permutation(t.n_rows)
    return [
        _sub_table(t, f"__r{i}", t.headers, [list(t.entries[r]) for r in part], SplitMode.ROW, i)
        for i, part in enumerate(np.array_split(order, n))
    ]


def split_cols(t: Table, m: int, seed: int) -> List[Table]:
    """Partition the non-first columns into m groups; every sub-table keeps the first column."""
    if m < 2:
        raise ValueError(f"split_cols needs m >= 2, got {m}")
    if m > t.n_cols - 1:
        raise TooFewCols(f"Table {t.id} has {t.n_cols} columns, cannot split into {m}")
    order = np.random.default_rng(seed).permutation(np.arange(1, t.n_cols))
    subtables = []
    for i, group in enumerate(np.array_split(order, m)):
        columns = [0] + sorted(int(c) for c in group)
        headers = [t.headers[c] for c in columns]
        entries = [[row[c] for c in columns] for row in t.entries]
        subtables.append(_sub_table(t, f"__c{i}", headers, entries, SplitMode.COLUMN, i))
    return subtables


def _swap_clauses(caption: str) -> str:
    for sep in _CLAUSE_SEPARATORS:
        if sep in caption:
            head, tail = caption.split(sep, 1)
            return f"{tail}{sep}{head}"
    return caption


def _substitute_synonyms(caption: str) -> str:
    def swap(match: re.Match) -> str:
        word = match.group(0)
        replacement = SYNONYMS[word.lower()]
        return replacement.capitalize() if word[0].isupper() else replacement

    pattern = r"\b(" + "|".join(map(re.escape, SYNONYMS)) + r")\b"
    return re.sub(pattern, swap, caption, flags=re.IGNORECASE)


def paraphrase_caption(caption: str, variant: int) -> str:
    """Deterministic caption rewrite; odd variants also reorder clauses and substitute synonyms."""
    text = caption.strip()
    if variant % 2 == 1:
        text = _substitute_synonyms(_swap_clauses(text))
    template = CAPTION_TEMPLATES[variant % len(CAPTION_TEMPLATES)]
    return template.format(c=text).strip()


def debias(sub_tables: List[Table], seed: int) -> List[Table]:
    """
    Rewrite sibling captions so that no two are equal, and shuffle row order (row splits) or
    non-first column order (column splits) of every sibling independently.
    """
    if len(sub_tables) < 2:
        raise ValueError("debias needs at least two sibling sub-tables")
    rng = np.random.default_rng(seed)
    variants = rng.permutation(len(CAPTION_TEMPLATES))
    used = set()
    result = []
    for i, t in enumerate(sub_tables):
        caption = paraphrase_caption(t.caption, int(variants[i % len(variants)]))
        if caption in used:
            caption = f"{caption} (part {i + 1})"
        used.add(caption)

        headers, entries = list(t.headers), [list(row) for row in t.entries]
        if t.metadata.get("split_mode") == SplitMode.COLUMN.value and len(headers) > 2:
            columns = [0] + [int(c) + 1 for c in rng.permutation(len(headers) - 1)]
            headers = [headers[c] for c in columns]
            entries = [[row[c] for c in columns] for row in entries]
        elif t.metadata.get("split_mode") == SplitMode.ROW.value:
            entries = [entries[r] for r in rng.permutation(len(entries))]
        result.append(Table(id=t.id, caption=caption, headers=headers, entries=entries, metadata=dict(t.metadata)))
    return result


class BalanceCounter:
    """Thread-safe tally of sub-tables produced per split mode. The two tallies never differ by more than `limit`."""

    def __init__(self, limit: int = MAX_PARTS):
        self._lock = threading.Lock()
        self.limit = limit
        self.counts = {SplitMode.ROW: 0, SplitMode.COLUMN: 0}

    def keeps_balance(self, mode: SplitMode, parts: int) -> bool:
        other = SplitMode.COLUMN if mode is SplitMode.ROW else SplitMode.ROW
        with self._lock:
            return abs(self.counts[mode] + parts - self.counts[other]) <= self.limit

    def choose(self, feasible: Sequence[SplitMode], parts: int) -> SplitMode:
        with self._lock:
            mode = min(feasible, key=lambda m: (self.counts[m], m is not SplitMode.ROW))
            self.counts[mode] += parts
            return mode

    @property
    def imbalance(self) -> int:
        return abs(self.counts[SplitMode.ROW] - self.counts[SplitMode.COLUMN])


def _stopword_ratio(tokens: List[str]) -> float:
    return sum(1 for tok in tokens if tok in STOPWORDS) / len(tokens) if tokens else 1.0


def filter_queries(
    queries: List[Query], stopword_ratio: float = 0.7, min_tokens: int = 5, redundancy: float = 0.9
) -> List[Query]:
    """Drop stopword-heavy, short and near-duplicate queries. Survivors keep their input order."""
    candidates = []
    for q in queries:
        tokens = tokenize(q.text)
        if len(tokens) < min_tokens or _stopword_ratio(tokens) > stopword_ratio:
            logger.debug(f"Query {q.id} dropped (length/stopwords)")
            continue
        candidates.append(q)
    if len(candidates) < 2:
        return candidates

    matrix = TfidfVectorizer(tokenizer=tokenize, token_pattern=None, lowercase=False).fit_transform(
        [q.text for q in candidates]
    )
    kept_rows: Dict[Optional[str], List[int]] = defaultdict(list)
    kept = []
    for i, q in enumerate(candidates):
        previous = kept_rows[q.root_table_id]
        if previous and cosine_similarity(matrix[i], matrix[previous]).max() >= redundancy:
            logger.debug(f"Query {q.id} dropped (redundant)")
            continue
        previous.append(i)
        kept.append(q)
    return kept


def _answer_values(answer: Any) -> List[str]:
    if answer is None:
        return []
    if isinstance(answer, (list, tuple)):
        return [v for item in answer for v in _answer_values(item)]
    return [str(answer)]


def combine_queries(queries: List[Query], seed: int, connectors: Sequence[str] = CONNECTORS) -> Query:
    """
    Join 2-3 queries of one root table with a seeded connector.

    All-TFV inputs stay TFV with answer 1 iff every claim holds; otherwise the answer is the list
    of source answers and the task becomes multi-hop when more than one cell is asked for.
    """
    if not 2 <= len(queries) <= 3:
        raise TooFewQueries(f"combine_queries needs 2 or 3 queries, got {len(queries)}")
    roots = {q.root_table_id for q in queries}
    if len(roots) > 1:
        raise ValueError(f"Queries to combine must share a root table, got {sorted(map(str, roots))}")

    rng = random.Random(seed)
    text = queries[0].text.strip()
    for prev, nxt in zip(queries, queries[1:]):
        connector = rng.choice(list(connectors))
        if connector == "Based on [previous query]":
            text = f"{text} Based on {prev.text.strip()}, {nxt.text.strip()}"
        elif connector == "Furthermore":
            text = f"{text} Furthermore, {nxt.text.strip()}"
        else:
            text = f"{text} {connector} {nxt.text.strip()}"

    if all(q.task_type is TaskType.TFV for q in queries):
        answer = int(all(q.gold_answer == 1 for q in queries))
        task = TaskType.TFV
    else:
        answer = [v for q in queries for v in _answer_values(q.gold_answer)]
        task = TaskType.MULTI_HOP if len(answer) > 1 else TaskType.SINGLE_HOP
    return Query(
        id="+".join(q.id for q in queries),
        text=text,
        task_type=task,
        gold_table_ids=list(queries[0].gold_table_ids),
        gold_answer=answer,
    )


def _decontextualize_piece(piece: str, caption: str, first: bool, last: bool) -> str:
    # captions may contain backslashes; never pass them as a replacement template
    def mention(_: re.Match) -> str:
        return caption

    piece = _ANYWHERE.sub(mention, piece)
    if first:
        piece = _SENTENCE_INITIAL.sub(mention, piece)
    else:
        piece = _SENTENCE_INITIAL_INNER.sub(mention, piece)
    end = _SENTENCE_END_LAST if last else _SENTENCE_END_INNER
    return end.sub(lambda _: f"in {caption}", piece)


def decontextualize(query_text: str, root_caption: str) -> str:
    """Replace vague references with the root caption. Existing caption mentions are left untouched."""
    caption = root_caption.strip()
    if not caption:
        return query_text
    pieces = query_text.split(caption)
    rewritten = [
        _decontextualize_piece(piece, caption, first=i == 0, last=i == len(pieces) - 1)
        for i, piece in enumerate(pieces)
    ]
    return caption.join(rewritten)


def _gold_subtables(answer: Any, subtables: List[Table]) -> List[str]:
    """Sub-tables whose cells contain an answer value; all siblings when no cell matches."""
    values = {v.strip().lower() for v in _answer_values(answer) if v.strip()}
    if len(subtables) == 1 or not values:
        return [t.id for t in subtables]
    hits = [
        t.id for t in subtables
        if any(cell.strip().lower() in values for row in t.entries for cell in row)
    ]
    return hits or [t.id for t in subtables]


def _fitting_modes(t: Table, parts: int) -> List[SplitMode]:
    modes = []
    if t.n_rows >= parts:
        modes.append(SplitMode.ROW)
    if t.n_cols - 1 >= parts:
        modes.append(SplitMode.COLUMN)
    return modes


def _plan_splits(roots: List[Table], seed: int) -> Tuple[Dict[str, SplitPlan], BalanceCounter]:
    rng = np.random.default_rng(seed)
    counter = BalanceCounter()
    plans = {}
    for t in roots:
        drawn = int(rng.integers(1, MAX_PARTS + 1))
        split_seed = int(rng.integers(0, 2**31 - 1))
        plans[t.id] = SplitPlan(SplitMode.NONE, 1, split_seed)
        # a mode only one shape allows may not widen the row/column gap past the limit:
        # fewer parts are tried first, then the root stays whole
        for parts in range(drawn, 1, -1):
            feasible = [m for m in _fitting_modes(t, parts) if counter.keeps_balance(m, parts)]
            if feasible:
                plans[t.id] = SplitPlan(counter.choose(feasible, parts), parts, split_seed)
                break
    return plans, counter


def _apply_plan(t: Table, plan: SplitPlan) -> List[Table]:
    if plan.mode is SplitMode.NONE:
        metadata = dict(t.metadata, root_table_id=t.id, split_mode=SplitMode.NONE.value, part=0)
        return [Table(id=t.id, caption=t.caption, headers=list(t.headers), entries=[list(r) for r in t.entries], metadata=metadata)]
    split = split_rows if plan.mode is SplitMode.ROW else split_cols
    return debias(split(t, plan.parts, plan.seed), plan.seed + 1)


def _group_for_combination(queries: List[Query], rng: random.Random) -> List[List[Query]]:
    groups, i = [], 0
    while i < len(queries):
        remaining = len(queries) - i
        if remaining == 1:
            groups.append([queries[i]])
            break
        size = 2 if remaining in (2, 4) else rng.choice([2, 3])
        groups.append(queries[i:i + size])
        i += size
    return groups


def _statistics(corpus: TableCorpus, examples: List[BenchmarkExample]) -> pd.DataFrame:
    rows = []
    for task in TaskType:
        subset = [e for e in examples if e.query.task_type is task]
        table_ids = sorted({tid for e in subset for tid in e.gold_table_ids})
        tables = [corpus.get(tid) for tid in table_ids]
        difficulty = pd.Series([e.difficulty.value for e in subset], dtype=object).value_counts()
        rows.append(
            {
                "task_type": task.value,
                "examples": len(subset),
                "tables": len(tables),
                "avg_rows": round(float(np.mean([t.n_rows for t in tables])), 2) if tables else 0.0,
                "avg_cols": round(float(np.mean([t.n_cols for t in tables])), 2) if tables else 0.0,
                **{d.value: int(difficulty.get(d.value, 0)) for d in Difficulty},
            }
        )
    return pd.DataFrame(rows).set_index("task_type")


def build_benchmark(sources: TableCorpus, queries: List[Query], config: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkDataset:
    """
    Turn single-table QA sources into a multi-table retrieval benchmark: filter small tables,
    split and debias roots, then filter, combine and decontextualize their queries.
    """
    start = time.time()
    logger.info("=== STEP 1: Filtering source tables ===")
    roots = filter_small(sources)

    logger.info("=== STEP 2: Splitting and debiasing roots ===")
    plans, counter = _plan_splits(list(roots), config.seed)
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, config.workers)) as executor:
        families = list(executor.map(lambda t: _apply_plan(t, plans[t.id]), roots))
    subtables_of = {t.id: subs for t, subs in zip(roots, families)}
    corpus = TableCorpus([s for subs in families for s in subs], source_tag=f"{sources.source_tag}-benchmark")
    logger.info(
        f"{len(corpus)} sub-tables from {len(roots)} roots "
        f"(row={counter.counts[SplitMode.ROW]}, column={counter.counts[SplitMode.COLUMN]})"
    )

    logger.info("=== STEP 3: Filtering, combining and decontextualizing queries ===")
    usable = [q for q in queries if q.root_table_id in subtables_of]
    survivors = filter_queries(usable, config.stopword_ratio, config.min_tokens, config.redundancy)
    by_group: Dict[Tuple[str, bool], List[Query]] = defaultdict(list)
    for q in survivors:
        by_group[(q.root_table_id, q.task_type is TaskType.TFV)].append(q)

    rng = random.Random(config.seed)
    examples = []
    for (root_id, _), group in sorted(by_group.items()):
        root = roots.get(root_id)
        subs = subtables_of[root_id]
        for batch in _group_for_combination(group, rng):
            q = combine_queries(batch, rng.randrange(2**31)) if len(batch) > 1 else batch[0]
            gold = _gold_subtables(q.gold_answer if q.task_type is not TaskType.TFV else None, subs)
            query = Query(
                id=q.id,
                text=decontextualize(q.text, root.caption),
                task_type=q.task_type,
                gold_table_ids=gold,
                gold_answer=q.gold_answer,
            )
            examples.append(
                BenchmarkExample(
                    query=query,
                    gold_table_ids=gold,
                    difficulty=Difficulty.from_parts(plans[root_id].parts),
                    root_table_id=root_id,
                )
            )

    if config.example_queries > 0 and examples:
        reserved = set(rng.sample(range(len(examples)), min(config.example_queries, len(examples))))
        for i in sorted(reserved):
            for tid in examples[i].gold_table_ids:
                corpus.get(tid).metadata.setdefault("example_queries", []).append(examples[i].query.text)
        examples = [e for i, e in enumerate(examples) if i not in reserved]
        logger.info(f"{len(reserved)} example queries moved into table metadata")

    seen_per_task: Dict[TaskType, int] = defaultdict(int)
    for e in examples:
        e.split = "test" if seen_per_task[e.query.task_type] < config.test_per_task else "train"
        seen_per_task[e.query.task_type] += 1

    stats = _statistics(corpus, examples)
    summary = {
        "seed": config.seed,
        "n_roots": len(roots),
        "n_tables": len(corpus),
        "n_examples": len(examples),
        "subtables_per_mode": {m.value: c for m, c in counter.counts.items()},
        "roots_per_difficulty": {
            d.value: sum(1 for p in plans.values() if Difficulty.from_parts(p.parts) is d) for d in Difficulty
        },
        "per_task": json.loads(stats.to_json(orient="index")),
    }
    logger.info(f"Benchmark built: {len(examples)} examples over {len(corpus)} tables in {time.time() - start:.2f}s")
    return BenchmarkDataset(corpus=corpus, examples=examples, stats=stats, summary=summary)


def save_benchmark(dataset: BenchmarkDataset, out_dir: str) -> Dict[str, str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "tables": save_corpus(dataset.corpus, str(out / "tables.jsonl")),
        "examples": str(out / "examples.jsonl"),
        "stats": str(out / "stats.json"),
    }
    with open(paths["examples"], "w", encoding="utf-8", newline="\n") as f:
        for e in dataset.examples:
            f.write(json.dumps(e.to_record(), ensure_ascii=False) + "\n")
    with open(paths["stats"], "w", encoding="utf-8", newline="\n") as f:
        json.dump(dataset.summary, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Benchmark saved at: {out}")
    return paths


def load_examples(path: str) -> List[BenchmarkExample]:
    source = Path(path)
    if not source.is_file():
        raise IOFailure(str(path), "examples file does not exist")
    examples = []
    with open(source, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                examples.append(BenchmarkExample.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise IOFailure(str(path), f"line {line_no}: {e}")
    return examples
