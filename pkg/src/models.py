from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional

from src.errors import InvalidQuery


class TaskType(str, Enum):
    TFV = "TFV"
    SINGLE_HOP = "SingleHopTQA"
    MULTI_HOP = "MultiHopTQA"


@dataclass
class Table:
    """A single table: caption A, headers H (M columns), entries E (N rows) and metadata D."""

    id: str
    caption: str
    headers: List[str]
    entries: List[List[str]]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.entries)

    @property
    def n_cols(self) -> int:
        return len(self.headers)

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "caption": self.caption,
            "headers": list(self.headers),
            "entries": [list(row) for row in self.entries],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "Table":
        return cls(
            id=str(record["id"]),
            caption="" if record.get("caption") is None else str(record["caption"]),
            headers=[str(h) for h in record.get("headers") or []],
            entries=[[str(c) for c in row] for row in record.get("entries") or []],
            metadata=dict(record.get("metadata") or {}),
        )


@dataclass(frozen=True)
class Violation:
    """One broken table invariant. Violations are reported as data."""

    table_id: str
    kind: str
    reason: str
    row: Optional[int] = None


class TableCorpus:
    """Ordered, id-unique collection of tables. Iteration follows insertion order."""

    def __init__(self, tables: Optional[List[Table]] = None, source_tag: str = ""):
        self.source_tag = source_tag
        self._tables: List[Table] = []
        self._by_id: Dict[str, Table] = {}
        for table in tables or []:
            self.add(table)

    def add(self, table: Table) -> None:
        if table.id in self._by_id:
            raise ValueError(f"Duplicate table id: {table.id}")
        self._tables.append(table)
        self._by_id[table.id] = table

    @property
    def tables(self) -> List[Table]:
        return list(self._tables)

    def ids(self) -> List[str]:
        return [t.id for t in self._tables]

    def get(self, table_id: str) -> Table:
        return self._by_id[table_id]

    def __contains__(self, table_id: object) -> bool:
        return table_id in self._by_id

    def __iter__(self) -> Iterator[Table]:
        return iter(self._tables)

    def __len__(self) -> int:
        return len(self._tables)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TableCorpus):
            return NotImplemented
        return self.source_tag == other.source_tag and self._tables == other._tables


@dataclass
class Query:
    id: str
    text: str
    task_type: TaskType = TaskType.SINGLE_HOP
    gold_table_ids: List[str] = field(default_factory=list)
    gold_answer: Any = None

    def __post_init__(self):
        self.task_type = TaskType(self.task_type)
        if not self.text or not self.text.strip():
            raise InvalidQuery(f"Query {self.id!r} has empty text")
        if self.task_type is TaskType.TFV and self.gold_answer is not None:
            if self.gold_answer not in (0, 1) or isinstance(self.gold_answer, bool):
                raise InvalidQuery(f"TFV query {self.id!r} must have gold answer 0 or 1, got {self.gold_answer!r}")

    @property
    def root_table_id(self) -> Optional[str]:
        return self.gold_table_ids[0] if self.gold_table_ids else None

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "task_type": self.task_type.value,
            "gold_table_ids": list(self.gold_table_ids),
            "gold_answer": self.gold_answer,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "Query":
        gold = record.get("gold_table_ids")
        if gold is None and record.get("table_id") is not None:
            gold = [record["table_id"]]
        return cls(
            id=str(record["id"]),
            text=record.get("text") or record.get("query") or "",
            task_type=record.get("task_type", TaskType.SINGLE_HOP.value),
            gold_table_ids=[str(g) for g in gold or []],
            gold_answer=record.get("gold_answer", record.get("answer")),
        )
