"""Seed-based retrieval query generation, template rendering, verification.

A query is a conjunction of attribute constraints sampled from one corpus row
(the seed), so the seed row always satisfies it. Every query is verified
symbolically against the whole corpus and kept only if at least MIN_MATCHES
rows satisfy it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import QueryError
from .tables import (
    KIND_NUMBER,
    KIND_TEXT,
    CellValue,
    Corpus,
    Document,
    Row,
    Table,
    normalize_value,
)
from .util import format_number, read_jsonl, rng_for, round_half_away, write_jsonl

logger = logging.getLogger(__name__)

OP_EQ = "eq"
OP_GT = "gt"
OP_LT = "lt"

QTYPE_CATEGORICAL = "categorical"
QTYPE_NUMERIC = "numeric"
QTYPE_MIXED = "mixed"

MIN_MATCHES = 5
EQ_DECIMALS = 2

TEMPLATE_IDS = tuple(f"T{i}" for i in range(1, 13))

# Multiplicative threshold perturbation bounds for gt/lt constraints.
PERTURB_LOW = 0.75
PERTURB_HIGH = 1.25
_MAX_PERTURB_DRAWS = 100


@dataclass(frozen=True)
class Constraint:
    column: str
    op: str  # eq | gt | lt
    value: float | str

    def __post_init__(self):
        if self.op not in (OP_EQ, OP_GT, OP_LT):
            raise QueryError(f"unknown operator {self.op!r}")
        if self.op in (OP_GT, OP_LT) and not isinstance(self.value, (int, float)):
            raise QueryError(f"{self.op} requires a numeric value")
        if self.op == OP_EQ and not isinstance(self.value, (int, float, str)):
            raise QueryError("eq requires a number or a string")

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, (int, float))


@dataclass(frozen=True)
class Query:
    qid: str
    qtype: str
    k: int
    constraints: tuple[Constraint, ...]
    text: str
    template: str
    seed_doc_id: str

    def __post_init__(self):
        if len(self.constraints) != self.k:
            raise QueryError("constraint count must equal k")
        if self.template not in TEMPLATE_IDS:
            raise QueryError(f"unknown template {self.template!r}")
        columns = [c.column for c in self.constraints]
        if len(set(columns)) != len(columns):
            raise QueryError("constraints must reference distinct columns")
        numeric = sum(c.is_numeric for c in self.constraints)
        if self.qtype == QTYPE_CATEGORICAL and numeric:
            raise QueryError("categorical query must use eq on text only")
        if self.qtype == QTYPE_NUMERIC and numeric != self.k:
            raise QueryError("numeric query must constrain number columns only")
        if self.qtype == QTYPE_MIXED and (numeric == 0 or numeric == self.k):
            raise QueryError("mixed query needs at least one constraint of each kind")


QrelSet = dict[str, set[str]]


def _value_text(value: float | str) -> str:
    if isinstance(value, str):
        return value
    return format_number(value, EQ_DECIMALS)


def _json_value(value: float | str):
    if isinstance(value, str):
        return value
    rounded = float(value)
    return int(rounded) if rounded == int(rounded) else rounded


def _worded(c: Constraint, eq: str, gt: str, lt: str) -> str:
    v = _value_text(c.value)
    if c.op == OP_EQ:
        return eq.format(col=c.column, v=v)
    if c.op == OP_GT:
        return gt.format(col=c.column, v=v)
    return lt.format(col=c.column, v=v)


def _render_t9(constraints: Sequence[Constraint]) -> str:
    body: dict = {}
    for c in constraints:
        if c.op == OP_EQ:
            body[c.column] = _json_value(c.value)
        elif c.op == OP_GT:
            body[c.column] = {"$gt": _json_value(c.value)}
        else:
            body[c.column] = {"$lt": _json_value(c.value)}
    return json.dumps(body, separators=(", ", ": "), ensure_ascii=False)


_TEMPLATE_RENDERERS: dict[str, Callable[[Sequence[Constraint]], str]] = {
    "T1": lambda cs: "Find records where "
    + " and ".join(_worded(c, "{col} is {v}", "{col} greater than {v}", "{col} less than {v}") for c in cs),
    "T2": lambda cs: "SELECT * FROM table WHERE "
    + " AND ".join(_worded(c, "{col} = {v}", "{col} > {v}", "{col} < {v}") for c in cs),
    "T3": lambda cs: "Which records have "
    + " and ".join(_worded(c, "{col} equal to {v}", "{col} greater than {v}", "{col} less than {v}") for c in cs)
    + "?",
    "T4": lambda cs: "Get all entries with "
    + " and ".join(_worded(c, "{col} of {v}", "{col} above {v}", "{col} below {v}") for c in cs),
    "T5": lambda cs: "Filter: "
    + ", ".join(_worded(c, "{col}=={v}", "{col}>{v}", "{col}<{v}") for c in cs),
    "T6": lambda cs: "Search for records: "
    + " ".join(_worded(c, "{col}:{v}", "{col}:>{v}", "{col}:<{v}") for c in cs),
    "T7": lambda cs: "I need data where "
    + " and ".join(
        _worded(c, "the {col} is {v}", "the {col} is more than {v}", "the {col} is less than {v}") for c in cs
    ),
    "T8": lambda cs: " | ".join(_worded(c, "{col} == {v}", "{col} > {v}", "{col} < {v}") for c in cs),
    "T9": _render_t9,
    "T10": lambda cs: "Show me rows that have "
    + " and ".join(_worded(c, "{col} as {v}", "{col} over {v}", "{col} under {v}") for c in cs),
    "T11": lambda cs: "Conditions: "
    + "; ".join(
        f"{i}. " + _worded(c, "{col} equals {v}", "{col} > {v}", "{col} < {v}")
        for i, c in enumerate(cs, start=1)
    ),
    "T12": lambda cs: "Look up records matching: "
    + ", ".join(_worded(c, "{col}={v}", "{col}>{v}", "{col}<{v}") for c in cs),
}


def render_query(constraints: Sequence[Constraint], template: str = "T1") -> str:
    """Render a constraint conjunction in one of the 12 query styles."""
    if not constraints:
        raise QueryError("cannot render an empty constraint list")
    try:
        renderer = _TEMPLATE_RENDERERS[template]
    except KeyError:
        raise QueryError(f"unknown template {template!r}") from None
    return renderer(constraints)


def make_class_query(target_column: str, value: str) -> str:
    """Label-description query used by the classification task."""
    if not value:
        raise QueryError("class query value must be non-empty")
    return f"This is a record where {target_column} is {value}."


def satisfies(row: Row, constraints: Sequence[Constraint], table: Table) -> bool:
    """Evaluate the constraint conjunction on one row.

    Text equality compares normalized strings, numeric equality compares at
    2-decimal rounding, gt/lt are strict on the raw value. A missing or
    wrong-kind cell fails its constraint.
    """
    for constraint in constraints:
        try:
            cell = row[table.column_index(constraint.column)]
        except KeyError:
            return False
        if not _cell_satisfies(cell, constraint):
            return False
    return True


def _cell_satisfies(cell: CellValue, constraint: Constraint) -> bool:
    if cell.is_missing():
        return False
    if constraint.is_numeric:
        if cell.kind != KIND_NUMBER:
            return False
        if constraint.op == OP_GT:
            return cell.number > constraint.value
        if constraint.op == OP_LT:
            return cell.number < constraint.value
        return round_half_away(cell.number, EQ_DECIMALS) == round_half_away(
            float(constraint.value), EQ_DECIMALS
        )
    if constraint.op != OP_EQ or cell.kind != KIND_TEXT:
        return False
    return normalize_value(cell) == constraint.value


class GenerationSkip(Exception):
    """Raised when a seed row cannot support the requested query shape."""


def _eligible_columns(table: Table, row: Row) -> tuple[list[str], list[str]]:
    numeric, categorical = [], []
    for j, col in enumerate(table.columns):
        cell = row[j]
        if cell.is_missing():
            continue
        if col.kind == KIND_NUMBER:
            numeric.append(col.name)
        elif col.kind == KIND_TEXT and normalize_value(cell):
            categorical.append(col.name)
    return numeric, categorical


def _strict_threshold_possible(value: float, op: str) -> bool:
    if op == OP_GT:
        return round_half_away(value * PERTURB_LOW, EQ_DECIMALS) < value
    return round_half_away(value * PERTURB_HIGH, EQ_DECIMALS) > value


def _numeric_constraint(column: str, value: float, rng) -> Constraint:
    ops = [OP_GT, OP_LT, OP_EQ]
    ops = [op for op in ops if op == OP_EQ or _strict_threshold_possible(value, op)]
    op = ops[int(rng.integers(len(ops)))]
    if op == OP_EQ:
        return Constraint(column=column, op=OP_EQ, value=float(value))
    for _ in range(_MAX_PERTURB_DRAWS):
        u = float(rng.uniform(PERTURB_LOW, PERTURB_HIGH))
        threshold = round_half_away(value * u, EQ_DECIMALS)
        if op == OP_GT and threshold < value:
            return Constraint(column=column, op=OP_GT, value=threshold)
        if op == OP_LT and threshold > value:
            return Constraint(column=column, op=OP_LT, value=threshold)
    return Constraint(column=column, op=OP_EQ, value=float(value))


def generate_query(
    table: Table,
    doc: Document,
    qtype: str,
    k: int,
    seed: int,
    template: str = "T1",
    qid: str = "q0",
) -> Query:
    """Sample a k-constraint query of the given type from one seed document.

    Categorical constraints pin the seed's exact value; numeric thresholds are
    perturbed multiplicatively but always keep the seed row satisfying.
    Deterministic given `seed`.
    """
    if qtype not in (QTYPE_CATEGORICAL, QTYPE_NUMERIC, QTYPE_MIXED):
        raise QueryError(f"unknown query type {qtype!r}")
    if k < 1 or (qtype == QTYPE_MIXED and k < 2):
        raise GenerationSkip(f"{qtype} query cannot have k={k}")
    row = table.rows[doc.source_row]
    numeric, categorical = _eligible_columns(table, row)
    rng = rng_for(seed, "query", doc.doc_id, qtype, k)

    if qtype == QTYPE_CATEGORICAL:
        if len(categorical) < k:
            raise GenerationSkip("not enough categorical columns")
        chosen = [categorical[i] for i in rng.choice(len(categorical), size=k, replace=False)]
        kinds = ["c"] * k
    elif qtype == QTYPE_NUMERIC:
        if len(numeric) < k:
            raise GenerationSkip("not enough numeric columns")
        chosen = [numeric[i] for i in rng.choice(len(numeric), size=k, replace=False)]
        kinds = ["n"] * k
    else:
        if not numeric or not categorical or len(numeric) + len(categorical) < k:
            raise GenerationSkip("mixed query needs both kinds")
        n_numeric = int(rng.integers(1, k))  # leaves at least one categorical slot
        n_numeric = min(n_numeric, len(numeric))
        n_categorical = min(k - n_numeric, len(categorical))
        n_numeric = k - n_categorical
        if n_numeric > len(numeric) or n_categorical < 1 or n_numeric < 1:
            raise GenerationSkip("mixed query needs both kinds")
        chosen_n = [numeric[i] for i in rng.choice(len(numeric), size=n_numeric, replace=False)]
        chosen_c = [categorical[i] for i in rng.choice(len(categorical), size=n_categorical, replace=False)]
        chosen = chosen_n + chosen_c
        kinds = ["n"] * n_numeric + ["c"] * n_categorical
        order = rng.permutation(k)
        chosen = [chosen[i] for i in order]
        kinds = [kinds[i] for i in order]

    constraints = []
    for column, kind in zip(chosen, kinds):
        cell = row[table.column_index(column)]
        if kind == "c":
            constraints.append(Constraint(column=column, op=OP_EQ, value=normalize_value(cell)))
        else:
            constraints.append(_numeric_constraint(column, cell.number, rng))
    constraints = tuple(constraints)
    return Query(
        qid=qid,
        qtype=qtype,
        k=k,
        constraints=constraints,
        text=render_query(constraints, template),
        template=template,
        seed_doc_id=doc.doc_id,
    )


def verify_query(
    query: Query, corpus: Corpus, tables_by_id: Mapping[str, Table]
) -> set[str]:
    """Exhaustively evaluate the query over every corpus row.

    Returns the full relevant doc_id set; the caller keeps the query only when
    it has at least MIN_MATCHES members.
    """
    if not corpus.documents:
        raise QueryError("cannot verify against an empty corpus")
    relevant: set[str] = set()
    resolved: dict[str, list[tuple[int, Constraint]] | None] = {}
    for doc in corpus.documents:
        table = tables_by_id[doc.dataset_id]
        plan = resolved.get(doc.dataset_id, _UNSET)
        if plan is _UNSET:
            plan = _resolve_constraints(query.constraints, table)
            resolved[doc.dataset_id] = plan
        if plan is None:
            continue
        row = table.rows[doc.source_row]
        if all(_cell_satisfies(row[j], c) for j, c in plan):
            relevant.add(doc.doc_id)
    return relevant


_UNSET = object()


def _resolve_constraints(
    constraints: Sequence[Constraint], table: Table
) -> list[tuple[int, Constraint]] | None:
    plan = []
    for c in constraints:
        try:
            plan.append((table.column_index(c.column), c))
        except KeyError:
            return None
    return plan


def feasible_cells(requested_types: Sequence[str] = (QTYPE_CATEGORICAL, QTYPE_NUMERIC, QTYPE_MIXED)) -> list[tuple[str, int]]:
    cells = []
    for qtype in requested_types:
        for k in (1, 2, 3):
            if qtype == QTYPE_MIXED and k < 2:
                continue
            cells.append((qtype, k))
    return cells


def spread_counts(total: int, cells: Sequence[tuple[str, int]]) -> dict[tuple[str, int], int]:
    """Distribute a requested total as evenly as possible over the cells."""
    base, remainder = divmod(total, len(cells))
    return {cell: base + (1 if i < remainder else 0) for i, cell in enumerate(cells)}


def generate_verified_queries(
    corpus: Corpus,
    tables_by_id: Mapping[str, Table],
    counts: Mapping[tuple[str, int], int],
    seed: int = 0,
    template: str = "T1",
    min_matches: int = MIN_MATCHES,
    attempt_factor: int = 200,
) -> tuple[list[Query], QrelSet, int]:
    """Generation driver: fill each (qtype, k) cell with verified queries.

    Seeds are drawn uniformly from the corpus; duplicates (same constraint
    set) are dropped. Returns (queries, qrels, rejected_count).
    """
    queries: list[Query] = []
    qrels: QrelSet = {}
    seen: set[tuple] = set()
    rejected = 0
    counter = 0
    for qtype, k in feasible_cells():
        need = counts.get((qtype, k), 0)
        if need <= 0:
            continue
        rng = rng_for(seed, "driver", qtype, k)
        accepted = 0
        attempts = 0
        max_attempts = max(1000, need * attempt_factor)
        while accepted < need and attempts < max_attempts:
            attempts += 1
            doc = corpus.documents[int(rng.integers(len(corpus.documents)))]
            table = tables_by_id[doc.dataset_id]
            try:
                query = generate_query(
                    table, doc, qtype, k, seed=int(rng.integers(2**31)), template=template,
                    qid=f"q{counter:05d}",
                )
            except GenerationSkip:
                continue
            signature = (qtype, tuple(sorted((c.column, c.op, c.value) for c in query.constraints)))
            if signature in seen:
                continue
            relevant = verify_query(query, corpus, tables_by_id)
            if len(relevant) < min_matches:
                rejected += 1
                continue
            seen.add(signature)
            queries.append(query)
            qrels[query.qid] = relevant
            counter += 1
            accepted += 1
        if accepted < need:
            logger.warning(
                "cell (%s, k=%d): only %d of %d queries verified after %d attempts",
                qtype, k, accepted, need, attempts,
            )
    return queries, qrels, rejected


def write_queries(path: str | Path, queries: Iterable[Query], header: dict | None = None) -> int:
    def records():
        for q in queries:
            yield {
                "qid": q.qid,
                "qtype": q.qtype,
                "k": q.k,
                "template": q.template,
                "text": q.text,
                "constraints": [
                    {"column": c.column, "op": c.op, "value": c.value} for c in q.constraints
                ],
                "seed_doc_id": q.seed_doc_id,
            }

    return write_jsonl(path, records(), header=header)


def read_queries(path: str | Path) -> list[Query]:
    queries = []
    for record in read_jsonl(path):
        constraints = tuple(
            Constraint(column=c["column"], op=c["op"], value=c["value"])
            for c in record["constraints"]
        )
        queries.append(
            Query(
                qid=record["qid"],
                qtype=record["qtype"],
                k=record["k"],
                constraints=constraints,
                text=record["text"],
                template=record["template"],
                seed_doc_id=record["seed_doc_id"],
            )
        )
    return queries


def write_qrels(path: str | Path, qrels: QrelSet, header_line: str | None = None) -> int:
    """Tab-separated qid<TAB>doc_id<TAB>1 lines, sorted for reproducibility."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        if header_line:
            fh.write(f"# {header_line}\n")
        for qid in sorted(qrels):
            for doc_id in sorted(qrels[qid]):
                fh.write(f"{qid}\t{doc_id}\t1\n")
                count += 1
    return count


def read_qrels(path: str | Path) -> QrelSet:
    qrels: QrelSet = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            qid, doc_id, _ = line.split("\t")
            qrels.setdefault(qid, set()).add(doc_id)
    return qrels
