import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from jinja2 import Environment, FileSystemLoader, StrictUndefined, select_autoescape

from src.errors import MissingAnswerTags
from src.models import Query, Table, TableCorpus, TaskType
from src.tools.fine_retrieval_tools import RetrievalResult

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "template"
NA_ANSWER = "NA"
MULTI_ANSWER_SEPARATOR = " | "

TASK_INSTRUCTIONS = {
    TaskType.TFV: (
        "Use the most relevant retrieved tables to verify whether the provided claim/query is true or false. "
        "Work through the problem step by step, and then return a 0 if it's false, or 1 if it's true. "
        "Only return 0 or 1 without any other information."
    ),
    TaskType.SINGLE_HOP: (
        "Use the most relevant retrieved tables to answer the question. Work through the problem step by step, "
        "and then return the answer as a single table cell value, copied exactly as it appears in the table."
    ),
    TaskType.MULTI_HOP: (
        "Use the most relevant retrieved tables to answer every part of the question. Work through the problem "
        "step by step, and then return all answer values copied exactly from the tables, separated by \" | \"."
    ),
}

DEFAULT_FEWSHOT = {
    TaskType.TFV: ["<answer>1</answer>", "<answer>0</answer>"],
    TaskType.SINGLE_HOP: ["<answer>1998</answer>", "<answer>Lisbon</answer>"],
    TaskType.MULTI_HOP: ["<answer>Lisbon | 1998</answer>", "<answer>12 | 7 | Porto</answer>"],
}

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.S)
_REASONING_RE = re.compile(r"<reasoning>(.*?)</reasoning>", re.S)

_prompt_env = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    autoescape=False,
    undefined=StrictUndefined,
    keep_trailing_newline=False,
)
_html_env = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    autoescape=select_autoescape(default=True, default_for_string=True),
    trim_blocks=False,
)


@dataclass
class PromptBundle:
    system: str
    user: str
    graph_records: List[Dict] = field(default_factory=list)
    task_instruction: str = ""
    fewshot: List[str] = field(default_factory=list)
    table_labels: Dict[str, str] = field(default_factory=dict)


@dataclass
class ParsedResponse:
    answer: str
    reasoning: Optional[str] = None
    is_na: bool = False


def render_table_html(t: Table) -> str:
    """Attribute-free HTML grid: caption, one header row, one row per entry. Cell text is escaped."""
    return _html_env.get_template("table.html.j2").render(table=t).strip()


def graph_records(result: RetrievalResult) -> List[Dict]:
    """One record per subgraph edge between two ranked tables, labelled by rank ("Table 1" is the best)."""
    labels = {tid: f"Table {rank}" for rank, (tid, _) in enumerate(result.ranked, start=1)}
    node_ids = result.subgraph.node_ids
    records = []
    for i, j, weight in result.subgraph.edges:
        source, target = node_ids[i], node_ids[j]
        if source not in labels or target not in labels:
            continue
        records.append(
            {
                "source_node": labels[source],
                "target_node": labels[target],
                "relationship": {"type": "similarity", "score": round(min(max(weight, 0.0), 1.0), 3)},
            }
        )
    return records


def build_prompt(
    q: Query,
    result: RetrievalResult,
    corpus: TableCorpus,
    task_type: Optional[TaskType] = None,
    fewshot: Optional[Sequence[str]] = None,
    graph_info: bool = True,
    long_cot: bool = True,
) -> PromptBundle:
    """
    Assemble the system and user messages for one query.

    Tables appear in ranking order. `graph_info=False` drops the graph block and `long_cot=False`
    drops the chain-of-thought instructions, keeping only the answer-tag contract.
    """
    if not result.ranked:
        raise ValueError("Cannot build a prompt from an empty retrieval result")
    task = TaskType(task_type or q.task_type)
    shots = list(DEFAULT_FEWSHOT[task] if fewshot is None else fewshot)
    labels = {tid: f"Table {rank}" for rank, (tid, _) in enumerate(result.ranked, start=1)}
    tables = [{"label": labels[tid], "html": render_table_html(corpus.get(tid))} for tid in result.ranked_ids]
    records = graph_records(result)

    user = _prompt_env.get_template("prompt_user.j2").render(
        query=q.text,
        tables=tables,
        graph_info=graph_info,
        graph_lines=[json.dumps(r, ensure_ascii=False) for r in records],
        task_instruction=TASK_INSTRUCTIONS[task],
        long_cot=long_cot,
        fewshot=shots,
    )
    system = _prompt_env.get_template("prompt_system.j2").render().strip()
    return PromptBundle(
        system=system,
        user=user,
        graph_records=records if graph_info else [],
        task_instruction=TASK_INSTRUCTIONS[task],
        fewshot=shots,
        table_labels=labels,
    )


def parse_response(text: str) -> ParsedResponse:
    """
    Take the first complete answer block (and the first reasoning block, if any).
    The answer payload is returned verbatim; scoring normalizes whitespace itself.
    """
    answer = _ANSWER_RE.search(text or "")
    if answer is None:
        raise MissingAnswerTags((text or "")[:80])
    reasoning = _REASONING_RE.search(text)
    payload = answer.group(1)
    return ParsedResponse(
        answer=payload,
        reasoning=reasoning.group(1).strip() if reasoning else None,
        is_na=payload.strip() == NA_ANSWER,
    )
