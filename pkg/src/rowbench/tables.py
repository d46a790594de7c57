"""Tabular ingestion, value normalization, row serialization, corpus assembly.

A table is an ordered list of (header, value) columns; a document is one row
rendered as natural language, one clause per column: "The {header} is {value}."
The global corpus aggregates serialized rows from every dataset with a hard
per-dataset cap.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CorpusError, SchemaError, SerializationError
from .util import format_number, read_jsonl, rng_for, write_jsonl

logger = logging.getLogger(__name__)

KIND_MISSING = "missing"
KIND_NUMBER = "number"
KIND_TEXT = "text"
KIND_TIMESTAMP = "timestamp"

DEFAULT_PRECISION = 2
DEFAULT_CAP = 10_000
DEFAULT_MAX_WORDS = 512

MISSING_LITERAL = "unknown"

# Extra datetime layouts beyond ISO 8601 that commonly appear in raw exports.
_EXTRA_DATETIME_FORMATS = ("%Y/%m/%d", "%m/%d/%Y")


@dataclass(frozen=True)
class CellValue:
    """A single typed cell. Exactly one payload is populated per kind."""

    kind: str
    number: float | None = None
    text: str | None = None
    timestamp: datetime | None = None

    def __post_init__(self):
        payloads = {
            KIND_MISSING: (self.number is None and self.text is None and self.timestamp is None),
            KIND_NUMBER: (self.number is not None and self.text is None and self.timestamp is None),
            KIND_TEXT: (self.text is not None and self.number is None and self.timestamp is None),
            KIND_TIMESTAMP: (self.timestamp is not None and self.number is None and self.text is None),
        }
        if self.kind not in payloads:
            raise ValueError(f"unknown cell kind: {self.kind!r}")
        if not payloads[self.kind]:
            raise ValueError(f"cell payload does not match kind {self.kind!r}")
        if self.kind == KIND_NUMBER and not math.isfinite(self.number):
            raise ValueError("numeric cell must be finite")

    @staticmethod
    def missing() -> "CellValue":
        return _MISSING_CELL

    @staticmethod
    def of_number(value: float) -> "CellValue":
        return CellValue(KIND_NUMBER, number=float(value))

    @staticmethod
    def of_text(value: str) -> "CellValue":
        return CellValue(KIND_TEXT, text=value)

    @staticmethod
    def of_timestamp(value: datetime) -> "CellValue":
        return CellValue(KIND_TIMESTAMP, timestamp=value)

    def is_missing(self) -> bool:
        return self.kind == KIND_MISSING

    def payload_key(self):
        """Hashable identity used for unique-value counting."""
        if self.kind == KIND_NUMBER:
            return (KIND_NUMBER, self.number)
        if self.kind == KIND_TEXT:
            return (KIND_TEXT, self.text)
        if self.kind == KIND_TIMESTAMP:
            return (KIND_TIMESTAMP, self.timestamp.isoformat())
        return (KIND_MISSING,)


_MISSING_CELL = CellValue(KIND_MISSING)

Row = tuple[CellValue, ...]


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str
    unique_count: int

    def __post_init__(self):
        if not self.name.strip():
            raise SchemaError("column name empty after whitespace trim")
        if self.unique_count < 0:
            raise ValueError("unique_count must be nonnegative")


@dataclass(frozen=True)
class Table:
    dataset_id: str
    columns: tuple[ColumnMeta, ...]
    rows: tuple[Row, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in dataset {self.dataset_id!r}")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(
                    f"dataset {self.dataset_id!r}: row {i} has {len(row)} cells, expected {width}"
                )

    def column_index(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise KeyError(name)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)


@dataclass(frozen=True)
class Document:
    doc_id: str
    dataset_id: str
    text: str
    source_row: int
    column_names: tuple[str, ...]


@dataclass
class Corpus:
    documents: list[Document]
    per_dataset_counts: dict[str, int]
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("cap must be positive")
        over = {k: v for k, v in self.per_dataset_counts.items() if v > self.cap}
        if over:
            raise ValueError(f"per-dataset counts exceed cap: {over}")
        ids = [d.doc_id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise ValueError("doc_ids are not globally unique")

    def __len__(self) -> int:
        return len(self.documents)

    def by_id(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.documents}


def is_missing_token(raw: str) -> bool:
    """Missing-value encodings: empty, NaN/null (any case), Python's None repr."""
    stripped = raw.strip()
    return stripped == "" or stripped == "None" or stripped.lower() in ("nan", "null")


def parse_number(raw: str) -> float | None:
    stripped = raw.strip()
    if not stripped or "_" in stripped:
        return None
    try:
        value = float(stripped)
    except ValueError:
        return None
    if not math.isfinite(value):
        return None
    return value


def parse_timestamp(raw: str) -> datetime | None:
    stripped = raw.strip()
    if not stripped:
        return None
    try:
        return datetime.fromisoformat(stripped)
    except ValueError:
        pass
    for fmt in _EXTRA_DATETIME_FORMATS:
        try:
            return datetime.strptime(stripped, fmt)
        except ValueError:
            continue
    return None


def decode_bytes(raw: bytes) -> str:
    """Byte payloads become text: UTF-8 first, Latin-1 as the fallback."""
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def read_delimited(path: str | Path, delimiter: str = ",") -> list[list[str]]:
    """Read a delimited text file (first record = header) into string records."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        records = list(csv.reader(fh, delimiter=delimiter))
    if not records:
        raise SchemaError(f"{path}: file is empty, header row required")
    return records


def infer_schema(raw_table: Sequence[Sequence[str]], dataset_id: str = "dataset") -> Table:
    """Build a typed Table from string records (header first).

    Each column gets the most specific kind such that every non-missing cell
    parses as it, in priority order number > timestamp > text.
    """
    if not raw_table:
        raise SchemaError("header row required")
    header = [str(h).strip() for h in raw_table[0]]
    if any(not h for h in header):
        raise SchemaError(f"dataset {dataset_id!r}: empty column name in header")
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise SchemaError(f"dataset {dataset_id!r}: duplicate headers {dupes}")
    width = len(header)
    body = raw_table[1:]
    for i, record in enumerate(body):
        if len(record) != width:
            raise SchemaError(
                f"dataset {dataset_id!r}: row {i} has {len(record)} fields, expected {width}"
            )

    kinds: list[str] = []
    for j in range(width):
        values = [str(rec[j]) for rec in body if not is_missing_token(str(rec[j]))]
        if values and all(parse_number(v) is not None for v in values):
            kinds.append(KIND_NUMBER)
        elif values and all(parse_timestamp(v) is not None for v in values):
            kinds.append(KIND_TIMESTAMP)
        else:
            kinds.append(KIND_TEXT)

    rows: list[Row] = []
    for record in body:
        cells: list[CellValue] = []
        for j, raw in enumerate(record):
            raw = str(raw)
            if is_missing_token(raw):
                cells.append(CellValue.missing())
            elif kinds[j] == KIND_NUMBER:
                cells.append(CellValue.of_number(parse_number(raw)))
            elif kinds[j] == KIND_TIMESTAMP:
                cells.append(CellValue.of_timestamp(parse_timestamp(raw)))
            else:
                cells.append(CellValue.of_text(raw))
        rows.append(tuple(cells))

    columns = []
    for j, name in enumerate(header):
        uniques = {row[j].payload_key() for row in rows if not row[j].is_missing()}
        columns.append(ColumnMeta(name=name, kind=kinds[j], unique_count=len(uniques)))
    return Table(dataset_id=dataset_id, columns=tuple(columns), rows=tuple(rows))


def normalize_value(cell: CellValue, precision: int = DEFAULT_PRECISION) -> str:
    """Render a cell as its serialized string form.

    missing -> "unknown"; numbers rounded to `precision` decimals with
    trailing fractional zeros stripped; timestamps in ISO 8601 with seconds;
    text trimmed of surrounding whitespace and trailing periods.
    """
    if precision < 0:
        raise ValueError("precision must be nonnegative")
    if cell.kind == KIND_MISSING:
        return MISSING_LITERAL
    if cell.kind == KIND_NUMBER:
        return format_number(cell.number, precision)
    if cell.kind == KIND_TIMESTAMP:
        return cell.timestamp.isoformat(sep="T", timespec="seconds")
    return cell.text.strip().rstrip(".").strip()


def serialize_row(
    row: Row,
    table: Table,
    excluded_columns: frozenset[str] | set[str] = frozenset(),
    precision: int = DEFAULT_PRECISION,
) -> str:
    """Concatenate "The {header} is {value}." clauses in table column order."""
    unknown = set(excluded_columns) - set(table.column_names)
    if unknown:
        raise KeyError(f"excluded columns not in table: {sorted(unknown)}")
    clauses = [
        f"The {col.name} is {normalize_value(cell, precision)}."
        for col, cell in zip(table.columns, row)
        if col.name not in excluded_columns
    ]
    if not clauses:
        raise SerializationError("all columns excluded, nothing to serialize")
    return " ".join(clauses)


def build_corpus(
    tables: Sequence[Table],
    cap: int = DEFAULT_CAP,
    max_words: int = DEFAULT_MAX_WORDS,
    seed: int = 0,
) -> Corpus:
    """Serialize every row of every table into the capped global corpus.

    Documents longer than `max_words` whitespace tokens are dropped. Datasets
    with more than `cap` surviving documents contribute a seeded uniform
    sample of exactly `cap`, in source-row order.
    """
    if not tables:
        raise CorpusError("no tables given")
    if cap < 1:
        raise ValueError("cap must be positive")
    documents: list[Document] = []
    per_dataset: dict[str, int] = {}
    for table in tables:
        if not table.rows:
            logger.warning("dataset %s is empty, contributing 0 documents", table.dataset_id)
            per_dataset[table.dataset_id] = 0
            continue
        survivors: list[Document] = []
        for i, row in enumerate(table.rows):
            text = serialize_row(row, table)
            if len(text.split()) > max_words:
                continue
            survivors.append(
                Document(
                    doc_id=f"{table.dataset_id}:{i}",
                    dataset_id=table.dataset_id,
                    text=text,
                    source_row=i,
                    column_names=table.column_names,
                )
            )
        if len(survivors) > cap:
            rng = rng_for(seed, "corpus-cap", table.dataset_id)
            keep = sorted(rng.permutation(len(survivors))[:cap].tolist())
            survivors = [survivors[i] for i in keep]
        documents.extend(survivors)
        per_dataset[table.dataset_id] = len(survivors)
    if not documents:
        raise CorpusError("no documents survived serialization and filtering")
    return Corpus(documents=documents, per_dataset_counts=per_dataset, cap=cap)


def document_column_records(doc: Document, table: Table) -> list[dict]:
    """Per-column name/kind/value records for the corpus file format."""
    row = table.rows[doc.source_row]
    included = set(doc.column_names)
    return [
        {"name": col.name, "kind": col.kind, "value": normalize_value(cell)}
        for col, cell in zip(table.columns, row)
        if col.name in included
    ]


def write_corpus(
    path: str | Path,
    corpus: Corpus,
    tables_by_id: dict[str, Table],
    header: dict | None = None,
) -> int:
    def records() -> Iterable[dict]:
        for doc in corpus.documents:
            yield {
                "doc_id": doc.doc_id,
                "dataset_id": doc.dataset_id,
                "text": doc.text,
                "columns": document_column_records(doc, tables_by_id[doc.dataset_id]),
            }

    return write_jsonl(path, records(), header=header)


def _cell_to_json(cell: CellValue):
    if cell.kind == KIND_MISSING:
        return None
    if cell.kind == KIND_NUMBER:
        return {"n": cell.number}
    if cell.kind == KIND_TIMESTAMP:
        return {"ts": cell.timestamp.isoformat()}
    return {"t": cell.text}


def _cell_from_json(payload) -> CellValue:
    if payload is None:
        return CellValue.missing()
    if "n" in payload:
        return CellValue.of_number(payload["n"])
    if "ts" in payload:
        return CellValue.of_timestamp(datetime.fromisoformat(payload["ts"]))
    return CellValue.of_text(payload["t"])


def write_tables(path: str | Path, tables: Sequence[Table], header: dict | None = None) -> int:
    def records():
        for table in tables:
            yield {
                "dataset_id": table.dataset_id,
                "columns": [
                    {"name": c.name, "kind": c.kind, "unique_count": c.unique_count}
                    for c in table.columns
                ],
                "rows": [[_cell_to_json(cell) for cell in row] for row in table.rows],
            }

    return write_jsonl(path, records(), header=header)


def read_tables(path: str | Path) -> list[Table]:
    tables = []
    for record in read_jsonl(path):
        columns = tuple(
            ColumnMeta(name=c["name"], kind=c["kind"], unique_count=c["unique_count"])
            for c in record["columns"]
        )
        rows = tuple(tuple(_cell_from_json(cell) for cell in row) for row in record["rows"])
        tables.append(Table(dataset_id=record["dataset_id"], columns=columns, rows=rows))
    return tables


def read_corpus(path: str | Path, cap: int = DEFAULT_CAP) -> Corpus:
    documents = []
    per_dataset: dict[str, int] = {}
    for record in read_jsonl(path):
        dataset_id, _, row_part = record["doc_id"].rpartition(":")
        documents.append(
            Document(
                doc_id=record["doc_id"],
                dataset_id=record["dataset_id"],
                text=record["text"],
                source_row=int(row_part),
                column_names=tuple(c["name"] for c in record["columns"]),
            )
        )
        per_dataset[record["dataset_id"]] = per_dataset.get(record["dataset_id"], 0) + 1
    return Corpus(documents=documents, per_dataset_counts=per_dataset, cap=cap)
