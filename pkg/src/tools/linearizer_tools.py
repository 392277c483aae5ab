import re
from dataclasses import dataclass
from typing import Union

from src.models import Query, Table
from src.utils.text import normalize_whitespace

TABLE_MARKER = "[Table]"
CAPTION_MARKER = "[Caption]"
HEADER_MARKER = "[Header]"

# Payload text that spells a marker gets its brackets doubled: "[Header]" -> "[[Header]]".
_MARKER_RE = re.compile(r"\[(Table|Caption|Header)\]")


@dataclass(frozen=True)
class LinearizedTable:
    table_id: str
    sequence: str


def escape_markers(text: str) -> str:
    return _MARKER_RE.sub(r"[[\1]]", text)


def linearize(t: Table) -> LinearizedTable:
    """Flatten the table schema into "[Table] [Caption] A [Header] h_1 ... [Header] h_M".

    Entries and metadata never enter the sequence.
    """
    parts = [TABLE_MARKER, CAPTION_MARKER, escape_markers(t.caption)]
    for header in t.headers:
        parts.extend([HEADER_MARKER, escape_markers(header)])
    return LinearizedTable(table_id=t.id, sequence=" ".join(parts))


def linearize_query(q: Union[Query, str]) -> str:
    text = q.text if isinstance(q, Query) else q
    return normalize_whitespace(text)
