import logging
import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from src.errors import EmptyGold
from src.utils.timing import StageTimer

logger = logging.getLogger(__name__)

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

LATENCY_STAGES = {
    "table_to_graph": "Table-to-Graph",
    "coarse": "Coarse-grained",
    "fine": "Fine-grained",
}


def _check(gold: Iterable[str], k: int) -> set:
    gold = set(gold)
    if not gold:
        raise EmptyGold("gold table set is empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return gold


def acc_at_k(ranked_ids: Sequence[str], gold: Iterable[str], k: int, mode: str = "all") -> int:
    """1 when the top-k covers the whole gold set ("all") or at least one gold table ("any")."""
    gold = _check(gold, k)
    top = set(ranked_ids[:k])
    if mode == "any":
        return int(bool(gold & top))
    if mode != "all":
        raise ValueError(f"Unknown accuracy mode {mode!r}")
    return int(gold <= top)


def recall_at_k(ranked_ids: Sequence[str], gold: Iterable[str], k: int) -> float:
    gold = _check(gold, k)
    return len(gold & set(ranked_ids[:k])) / len(gold)


def normalize_answer(text: Any) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = str(text).lower().translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def _string_f1(pred: str, gold: str) -> float:
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_tokens)
    recall = common / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def split_answer(answer: Any) -> List[str]:
    """List form of an answer: lists stay lists, strings split on "|" (or "," when no "|")."""
    if isinstance(answer, (list, tuple)):
        return [str(a).strip() for a in answer if str(a).strip()]
    text = str(answer).strip() if answer is not None else ""
    if not text:
        return []
    separator = "|" if "|" in text else ","
    parts = [p.strip() for p in text.split(separator)] if separator in text else [text]
    return [p for p in parts if p]


def _greedy_match(pred: List[str], gold: List[str], score) -> float:
    """Greedy one-to-one alignment by best pairwise score, averaged over the longer list."""
    if not pred or not gold:
        return float(not pred and not gold)
    pairs = sorted(
        ((score(p, g), i, j) for i, p in enumerate(pred) for j, g in enumerate(gold)),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    used_p, used_g, total = set(), set(), 0.0
    for s, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        total += s
    return total / max(len(pred), len(gold))


def exact_match(pred: Any, gold: Any) -> int:
    if isinstance(gold, (list, tuple)):
        em = lambda p, g: float(normalize_answer(p) == normalize_answer(g))
        return int(_greedy_match(split_answer(pred), split_answer(gold), em) == 1.0)
    if pred is None or gold is None:
        return 0
    return int(normalize_answer(pred) == normalize_answer(gold))


def token_f1(pred: Any, gold: Any) -> float:
    if isinstance(gold, (list, tuple)):
        return _greedy_match(split_answer(pred), split_answer(gold), _string_f1)
    if pred is None or gold is None:
        return 0.0
    return _string_f1(str(pred), str(gold))


@dataclass
class RetrievalReport:
    ks: List[int]
    per_k: Dict[int, Dict[str, float]]
    per_task: Dict[str, Dict[int, Dict[str, float]]] = field(default_factory=dict)
    n_queries: int = 0
    mean_coarse_retained: Optional[float] = None
    mean_retained_fraction: Optional[float] = None
    coarse_hit_rate: Optional[float] = None
    acc_mode: str = "all"
    latency: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "ks": list(self.ks),
            "acc_mode": self.acc_mode,
            "n_queries": self.n_queries,
            "per_k": {str(k): v for k, v in self.per_k.items()},
            "per_task": {t: {str(k): v for k, v in per.items()} for t, per in self.per_task.items()},
            "mean_coarse_retained": self.mean_coarse_retained,
            "mean_retained_fraction": self.mean_retained_fraction,
            "coarse_hit_rate": self.coarse_hit_rate,
            "latency": dict(self.latency),
        }


@dataclass
class AnswerRecord:
    query_id: str
    task_type: str
    prediction: Optional[str]
    gold: Any
    em: int
    f1: float
    is_na: bool = False
    parse_failure: bool = False


@dataclass
class AnswerReport:
    em: float
    f1: float
    n: int
    n_na: int = 0
    n_parse_failures: int = 0
    records: List[AnswerRecord] = field(default_factory=list)
    per_task: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "n": self.n,
            "n_na": self.n_na,
            "n_parse_failures": self.n_parse_failures,
            "per_task": self.per_task,
            "records": [r.__dict__ for r in self.records],
        }


def _per_k_means(rows: List[Dict[int, Dict[str, float]]], ks: List[int]) -> Dict[int, Dict[str, float]]:
    return {
        k: {
            "acc": float(np.mean([r[k]["acc"] for r in rows])) if rows else 0.0,
            "recall": float(np.mean([r[k]["recall"] for r in rows])) if rows else 0.0,
        }
        for k in ks
    }


def evaluate_rankings(
    rankings: Sequence[Sequence[str]],
    golds: Sequence[Iterable[str]],
    ks: Sequence[int] = (10, 20, 50),
    task_types: Optional[Sequence[str]] = None,
    acc_mode: str = "all",
) -> RetrievalReport:
    """Mean Acc@k and Recall@k over queries, overall and per task type."""
    if len(rankings) != len(golds):
        raise ValueError("rankings and golds must have the same length")
    ks = sorted(set(int(k) for k in ks))
    rows, by_task = [], defaultdict(list)
    for i, (ranked, gold) in enumerate(zip(rankings, golds)):
        ranked = list(ranked)
        row = {k: {"acc": acc_at_k(ranked, gold, k, acc_mode), "recall": recall_at_k(ranked, gold, k)} for k in ks}
        rows.append(row)
        if task_types is not None:
            by_task[str(task_types[i])].append(row)
    return RetrievalReport(
        ks=ks,
        per_k=_per_k_means(rows, ks),
        per_task={task: _per_k_means(task_rows, ks) for task, task_rows in sorted(by_task.items())},
        n_queries=len(rows),
        acc_mode=acc_mode,
    )


def summarize_answers(records: List[AnswerRecord]) -> AnswerReport:
    by_task = defaultdict(list)
    for r in records:
        by_task[r.task_type].append(r)
    mean = lambda values: float(np.mean(values)) if values else 0.0
    return AnswerReport(
        em=mean([r.em for r in records]),
        f1=mean([r.f1 for r in records]),
        n=len(records),
        n_na=sum(r.is_na for r in records),
        n_parse_failures=sum(r.parse_failure for r in records),
        records=records,
        per_task={
            task: {"em": mean([r.em for r in rs]), "f1": mean([r.f1 for r in rs]), "n": len(rs)}
            for task, rs in sorted(by_task.items())
        },
    )


def latency_report(timer: StageTimer) -> Dict[str, float]:
    """Per-stage wall-clock seconds with display names, plus their total. Empty when timing is off."""
    if not timer.enabled:
        return {}
    durations = timer.durations
    report = {label: round(durations.get(stage, 0.0), 6) for stage, label in LATENCY_STAGES.items()}
    report["Total"] = round(sum(report.values()), 6)
    return report
