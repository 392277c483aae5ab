import concurrent.futures
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import List, Tuple

import pandas as pd

from src.errors import IOFailure, SchemaViolation
from src.models import Query, Table, TableCorpus, Violation

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1
CORPUS_HEADER_KEY = "__corpus__"
SUPPORTED_FORMATS = ("jsonl", "csv_dir")
LONG_ROW_MARK = "\x00long-row:"


def validate_table(t: Table) -> List[Violation]:
    """
    Check the per-table invariants. Returns an empty list iff the table is well formed.
    Duplicate ids are a corpus-level concern and are checked by load_corpus.
    """
    violations = []
    if not t.id:
        violations.append(Violation(t.id, "EmptyId", "table id is empty"))
    if len(t.headers) < 1:
        violations.append(Violation(t.id, "NoColumns", "table has no headers (M = 0)"))
    if len(t.entries) < 1:
        violations.append(Violation(t.id, "NoRows", "table has no entry rows (N = 0)"))
    width = len(t.headers)
    for i, row in enumerate(t.entries):
        if len(row) != width:
            violations.append(
                Violation(t.id, "RaggedRow", f"row {i} has {len(row)} cells, expected {width}", row=i)
            )
    return violations


def _record_violations(line_no: int, record: object) -> List[Violation]:
    label = f"line {line_no}"
    if not isinstance(record, dict):
        return [Violation(label, "BadRecord", "record is not a JSON object")]
    missing = [k for k in ("id", "headers", "entries") if k not in record]
    if missing:
        return [Violation(str(record.get("id", label)), "MissingField", f"missing fields: {', '.join(missing)}")]
    if not isinstance(record["headers"], list) or not isinstance(record["entries"], list):
        return [Violation(str(record["id"]), "BadField", "headers and entries must be lists")]
    if any(not isinstance(row, list) for row in record["entries"]):
        return [Violation(str(record["id"]), "BadField", "every entry row must be a list")]
    return []


def _load_jsonl(path: Path) -> TableCorpus:
    source_tag = path.name
    tables: List[Table] = []
    violations: List[Violation] = []
    seen = set()
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise IOFailure(str(path), str(e))

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            violations.append(Violation(f"line {line_no}", "BadJson", str(e)))
            continue
        if isinstance(record, dict) and CORPUS_HEADER_KEY in record:
            header = record[CORPUS_HEADER_KEY]
            if not isinstance(header, dict):
                raise IOFailure(str(path), f"line {line_no}: {CORPUS_HEADER_KEY} must be a JSON object")
            if header.get("version") != CORPUS_FORMAT_VERSION:
                raise IOFailure(str(path), f"unsupported corpus format version {header.get('version')}")
            source_tag = header.get("source_tag", source_tag)
            continue
        problems = _record_violations(line_no, record)
        if problems:
            violations.extend(problems)
            continue
        table = Table.from_record(record)
        problems = validate_table(table)
        if table.id in seen:
            problems.append(Violation(table.id, "DuplicateId", f"duplicate table id on line {line_no}"))
        seen.add(table.id)
        if problems:
            violations.extend(problems)
            continue
        tables.append(table)

    if violations:
        for v in violations:
            logger.error(f"Schema violation in {path}: {v.table_id}: {v.reason}")
        raise SchemaViolation(violations)
    return TableCorpus(tables, source_tag=source_tag)


def load_csv_table(path: Path) -> Table:
    """
    Read one delimited file: file stem becomes the id, the first row the headers.
    Rows shorter or longer than the header row are kept as read, so validation reports them as RaggedRow.
    """
    sep = "\t" if path.suffix.lower() == ".tsv" else ","
    options = dict(header=None, sep=sep, dtype=str, keep_default_na=False, skip_blank_lines=True, engine="python")
    try:
        first = pd.read_csv(path, nrows=1, **options)
    except pd.errors.EmptyDataError:
        return Table(id=path.stem, caption="", headers=[], entries=[])
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise IOFailure(str(path), str(e))
    width = first.shape[1]

    long_rows: List[List[str]] = []

    def keep_long_row(cells: List[str]) -> List[str]:
        # placeholder of the right width, swapped back for the full row below
        long_rows.append(cells)
        return [f"{LONG_ROW_MARK}{len(long_rows) - 1}"] + [""] * (width - 1)

    try:
        df = pd.read_csv(path, on_bad_lines=keep_long_row, **options)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise IOFailure(str(path), str(e))

    rows = []
    for values in df.itertuples(index=False, name=None):
        cells = list(values)
        first_cell = cells[0] if cells else None
        if isinstance(first_cell, str) and first_cell.startswith(LONG_ROW_MARK):
            rows.append([str(c) for c in long_rows[int(first_cell[len(LONG_ROW_MARK):])]])
            continue
        # short rows come back padded with NaN; keep only the cells that were read
        while cells and pd.isna(cells[-1]):
            cells.pop()
        rows.append([str(c) for c in cells])
    return Table(id=path.stem, caption="", headers=rows[0], entries=rows[1:])


def _load_csv_dir(path: Path) -> TableCorpus:
    files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in (".csv", ".tsv"))
    logger.info(f"Loading {len(files)} delimited files from {path} in parallel...")
    start = time.time()

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, min(4, len(files)))) as executor:
        tables = list(executor.map(load_csv_table, files))

    violations = []
    seen = set()
    for table in tables:
        violations.extend(validate_table(table))
        if table.id in seen:
            violations.append(Violation(table.id, "DuplicateId", "two files map to the same id"))
        seen.add(table.id)
    if violations:
        raise SchemaViolation(violations)

    logger.info(f"{len(tables)} tables loaded in {time.time() - start:.2f}s")
    return TableCorpus(tables, source_tag=path.name)


def load_corpus(path: str, format: str = "jsonl") -> TableCorpus:
    """
    Load a table corpus.

    Args:
        path: JSONL file (format="jsonl") or directory of CSV files (format="csv_dir").
        format: one of SUPPORTED_FORMATS.

    Raises:
        IOFailure: unreadable path or mismatched format.
        SchemaViolation: one or more tables break an invariant; all of them are listed.
    """
    source = Path(path)
    if not source.exists():
        raise IOFailure(str(path), "path does not exist")
    if format == "jsonl":
        if not source.is_file():
            raise IOFailure(str(path), "jsonl format expects a file")
        corpus = _load_jsonl(source)
    elif format == "csv_dir":
        if not source.is_dir():
            raise IOFailure(str(path), "csv_dir format expects a directory")
        corpus = _load_csv_dir(source)
    else:
        raise IOFailure(str(path), f"unknown corpus format {format!r}")
    logger.info(f"Corpus {corpus.source_tag!r}: {len(corpus)} tables")
    return corpus


def corpus_to_lines(corpus: TableCorpus) -> List[str]:
    header = {CORPUS_HEADER_KEY: {"version": CORPUS_FORMAT_VERSION, "source_tag": corpus.source_tag}}
    lines = [json.dumps(header, ensure_ascii=False)]
    lines.extend(json.dumps(t.to_record(), ensure_ascii=False) for t in corpus)
    return lines


def save_corpus(corpus: TableCorpus, path: str) -> str:
    """Write the canonical JSONL corpus file (header record, then one table per line)."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            for line in corpus_to_lines(corpus):
                f.write(line + "\n")
    except OSError as e:
        raise IOFailure(str(path), str(e))
    logger.info(f"Corpus with {len(corpus)} tables saved at: {out}")
    return str(out)


def corpus_digest(corpus: TableCorpus) -> str:
    digest = hashlib.sha256()
    for table in corpus:
        digest.update(json.dumps(table.to_record(), ensure_ascii=False, sort_keys=True).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def load_queries(path: str) -> List[Query]:
    source = Path(path)
    if not source.is_file():
        raise IOFailure(str(path), "query file does not exist")
    queries = []
    with open(source, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                queries.append(Query.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise IOFailure(str(path), f"line {line_no}: {e}")
    logger.info(f"{len(queries)} queries loaded from {source}")
    return queries


def save_queries(queries: List[Query], path: str) -> str:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for q in queries:
            f.write(json.dumps(q.to_record(), ensure_ascii=False) + "\n")
    return str(out)


def ingest(path: str, format: str, out: str) -> Tuple[TableCorpus, str]:
    """Load a corpus in any supported format and persist it in the canonical format."""
    corpus = load_corpus(path, format)
    return corpus, save_corpus(corpus, out)

