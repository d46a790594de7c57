"""Diagnostics: numeric sensitivity, noise robustness, template robustness,
cluster separation.

The numeric sensitivity test sweeps a candidate value across a 101-point grid,
embeds "The {column} is {value}." documents against a fixed constraint query,
and reports the Spearman correlation between the similarity series and the
boolean truth of the constraint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AnalysisError
from .embedders import SearchIndex, embed_texts
from .evaluation import RetrievalReport, eval_retrieval, mrr_at_k, ndcg_at_k
from .queries import (
    OP_EQ,
    OP_GT,
    OP_LT,
    Constraint,
    Query,
    QrelSet,
    render_query,
)
from .tables import Corpus, Document
from .util import format_number, rng_for, round_half_away

logger = logging.getLogger(__name__)

GRID_POINTS = 101
OP_BETWEEN = "between"

DEFAULT_NOISE_LEVELS = (0, 5, 10, 15, 20, 25, 30)
DEFAULT_BASE_COLUMNS = 15
MAX_NOISE_LEVEL = 30


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties replaced by their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation of average-ranked series; 0 on zero rank variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise AnalysisError(f"series lengths differ: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise AnalysisError("need at least two observations")
    ra = average_ranks(a)
    rb = average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    var_a = float(np.dot(da, da))
    var_b = float(np.dot(db, db))
    if var_a == 0.0 or var_b == 0.0:
        return 0.0
    return float(np.dot(da, db) / np.sqrt(var_a * var_b))


@dataclass(frozen=True)
class SensitivityCase:
    """One numeric constraint swept over a value grid."""

    case_id: str
    column: str
    op: str  # gt | lt | eq | between
    thresholds: tuple[float, ...]
    grid: tuple[float, ...]
    context_clauses: tuple[str, ...] = ()
    template: str = "T1"

    def __post_init__(self):
        if self.op not in (OP_GT, OP_LT, OP_EQ, OP_BETWEEN):
            raise AnalysisError(f"unknown sensitivity operator {self.op!r}")
        expected = 2 if self.op == OP_BETWEEN else 1
        if len(self.thresholds) != expected:
            raise AnalysisError(f"{self.op} needs {expected} threshold(s)")
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.size != GRID_POINTS:
            raise AnalysisError(f"grid must have {GRID_POINTS} points, got {grid.size}")
        if np.any(np.diff(grid) <= 0):
            raise AnalysisError("grid must be strictly increasing")
        lo, hi = grid[0], grid[-1]
        if not all(lo < t < hi for t in self.thresholds):
            raise AnalysisError("grid must straddle every threshold")

    def constraints(self) -> tuple[Constraint, ...]:
        if self.op == OP_BETWEEN:
            lo, hi = self.thresholds
            return (
                Constraint(column=self.column, op=OP_GT, value=lo),
                Constraint(column=self.column, op=OP_LT, value=hi),
            )
        return (Constraint(column=self.column, op=self.op, value=self.thresholds[0]),)

    def truth(self, value: float) -> bool:
        if self.op == OP_GT:
            return value > self.thresholds[0]
        if self.op == OP_LT:
            return value < self.thresholds[0]
        if self.op == OP_EQ:
            return round_half_away(value, 2) == round_half_away(self.thresholds[0], 2)
        lo, hi = self.thresholds
        return lo < value < hi


def make_grid(low: float, high: float) -> tuple[float, ...]:
    return tuple(np.linspace(low, high, GRID_POINTS).tolist())


def cases_from_queries(
    queries: Sequence[Query],
    corpus: Corpus,
    tables_by_id: Mapping[str, "object"],
    limit: int | None = None,
    skip_name_fragment: str = "Unnamed",
) -> list[SensitivityCase]:
    """Derive inequality cases from the benchmark's single-constraint numeric
    queries.

    Each case sweeps the constrained column over a grid centered on the
    query's threshold, with the rest of the seed row serialized as fixed
    context; one case per (column, operator) pair, in qid order. Single-
    constraint queries are used because their mined negatives are guaranteed
    to violate the probed constraint.
    """
    from .tables import serialize_row

    docs_by_id = corpus.by_id()
    cases: list[SensitivityCase] = []
    seen: set[tuple[str, str]] = set()
    for query in sorted(queries, key=lambda q: q.qid):
        if query.k != 1:
            continue
        constraint = query.constraints[0]
        if constraint.op not in (OP_GT, OP_LT):
            continue
        if skip_name_fragment and skip_name_fragment in constraint.column:
            continue
        key = (constraint.column, constraint.op)
        if key in seen:
            continue
        doc = docs_by_id.get(query.seed_doc_id)
        if doc is None:
            continue
        table = tables_by_id[doc.dataset_id]
        seen.add(key)
        threshold = float(constraint.value)
        span = max(abs(threshold) * 0.75, 1.0)
        context = serialize_row(
            table.rows[doc.source_row], table, excluded_columns={constraint.column}
        )
        cases.append(
            SensitivityCase(
                case_id=f"{doc.dataset_id}.{constraint.column}.{constraint.op}",
                column=constraint.column,
                op=constraint.op,
                thresholds=(threshold,),
                grid=make_grid(threshold - span, threshold + span),
                context_clauses=(context,),
            )
        )
        if limit is not None and len(cases) >= limit:
            break
    return cases


@dataclass
class SensitivityResult:
    case_id: str
    rho: float
    similarities: list[float]
    truth: list[bool]
    query_text: str

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "rho": self.rho,
            "similarities": self.similarities,
            "truth": [bool(t) for t in self.truth],
            "query_text": self.query_text,
        }


def numeric_sensitivity(embedder, case: SensitivityCase) -> SensitivityResult:
    """Embed the constraint query against the 101 candidate documents."""
    query_text = render_query(case.constraints(), case.template)
    suffix = (" " + " ".join(case.context_clauses)) if case.context_clauses else ""
    candidates = [
        f"The {case.column} is {format_number(v)}.{suffix}" for v in case.grid
    ]
    vectors = embed_texts([query_text] + candidates, embedder)
    query_vec, doc_vecs = vectors[0], vectors[1:]
    similarities = (doc_vecs @ query_vec).tolist()
    truth = [case.truth(v) for v in case.grid]
    rho = spearman(similarities, [1.0 if t else 0.0 for t in truth])
    return SensitivityResult(
        case_id=case.case_id,
        rho=rho,
        similarities=similarities,
        truth=truth,
        query_text=query_text,
    )


@dataclass(frozen=True)
class NoiseColumn:
    """A real column from some dataset, usable as an irrelevant clause source."""

    name: str
    values: tuple[str, ...]
    source_dataset: str = ""


@dataclass
class NoisePlan:
    """Incremental injection of irrelevant clauses into every document."""

    pool: list[NoiseColumn]
    levels: tuple[int, ...] = DEFAULT_NOISE_LEVELS
    base_columns: int = DEFAULT_BASE_COLUMNS

    def __post_init__(self):
        levels = tuple(self.levels)
        if any(b >= a for a, b in zip(levels[1:], levels)):
            raise AnalysisError("noise levels must be strictly ascending")
        if levels and levels[-1] > MAX_NOISE_LEVEL:
            raise AnalysisError(f"noise levels cannot exceed {MAX_NOISE_LEVEL}")
        if levels and levels[0] < 0:
            raise AnalysisError("noise levels must be nonnegative")
        names = [col.name for col in self.pool]
        if len(set(names)) != len(names):
            raise AnalysisError("noise pool column names must be unique")


@dataclass
class NoiseResult:
    mrr_by_level: dict[int, float]
    delta_by_level: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "mrr_by_level": {str(k): v for k, v in sorted(self.mrr_by_level.items())},
            "delta_by_level": {str(k): v for k, v in sorted(self.delta_by_level.items())},
        }


def noisy_documents(
    documents: Sequence[Document], plan: NoisePlan, seed: int
) -> dict[int, list[str]]:
    """Texts per level; every level-n text extends the level-(n-1) text.

    Each document draws one fixed, seeded permutation of noise columns taken
    from other datasets; level n appends the first n sampled clauses, so
    higher levels are clause-wise supersets of lower ones and level 0 is
    byte-identical to the original.
    """
    max_level = max(plan.levels)
    texts_by_level: dict[int, list[str]] = {level: [] for level in plan.levels}
    for doc in documents:
        eligible = [
            i for i, col in enumerate(plan.pool) if col.source_dataset != doc.dataset_id
        ]
        if len(eligible) < max_level:
            raise AnalysisError(
                f"noise pool has {len(eligible)} columns foreign to {doc.dataset_id}, "
                f"need {max_level}"
            )
        rng = rng_for(seed, "noise", doc.doc_id)
        chosen = rng.choice(len(eligible), size=max_level, replace=False)
        clauses = []
        for idx in chosen:
            col = plan.pool[eligible[int(idx)]]
            value = col.values[int(rng.integers(len(col.values)))]
            clauses.append(f"The {col.name} is {value}.")
        for level in plan.levels:
            if level == 0:
                texts_by_level[0].append(doc.text)
            else:
                texts_by_level[level].append(doc.text + " " + " ".join(clauses[:level]))
    return texts_by_level


def noise_robustness(
    embedder,
    corpus: Corpus,
    queries: Sequence[Query],
    qrels: QrelSet,
    plan: NoisePlan,
    seed: int = 0,
) -> NoiseResult:
    """MRR@10 as a function of the number of injected irrelevant clauses."""
    constrained = {c.column for q in queries for c in q.constraints}
    overlap = constrained & {col.name for col in plan.pool}
    if overlap:
        raise AnalysisError(f"noise columns intersect constrained columns: {sorted(overlap)}")
    texts_by_level = noisy_documents(corpus.documents, plan, seed)
    doc_ids = [d.doc_id for d in corpus.documents]
    query_vectors = embed_texts([q.text for q in queries], embedder)

    mrr_by_level: dict[int, float] = {}
    for level in plan.levels:
        doc_vectors = embed_texts(texts_by_level[level], embedder)
        index = SearchIndex(doc_vectors, doc_ids)
        per_query = []
        for query, query_vec in zip(queries, query_vectors):
            ranked = index.ranked_ids(query_vec, 10)
            per_query.append(mrr_at_k(ranked, qrels[query.qid], 10))
        mrr_by_level[level] = float(np.mean(per_query))
    base = mrr_by_level[min(plan.levels)]
    return NoiseResult(
        mrr_by_level=mrr_by_level,
        delta_by_level={level: value - base for level, value in mrr_by_level.items()},
    )


@dataclass
class TemplateRobustnessReport:
    per_template: dict[str, RetrievalReport]
    per_intent_std: dict[str, float]
    mean_std: float

    def to_dict(self) -> dict:
        return {
            "per_template": {t: r.to_dict() for t, r in sorted(self.per_template.items())},
            "per_intent_std": dict(sorted(self.per_intent_std.items())),
            "mean_std": self.mean_std,
        }


def intent_query(intent_id: str, constraints: tuple[Constraint, ...], template: str) -> Query:
    numeric = sum(c.is_numeric for c in constraints)
    if numeric == 0:
        qtype = "categorical"
    elif numeric == len(constraints):
        qtype = "numeric"
    else:
        qtype = "mixed"
    return Query(
        qid=intent_id,
        qtype=qtype,
        k=len(constraints),
        constraints=tuple(constraints),
        text=render_query(constraints, template),
        template=template,
        seed_doc_id="",
    )


def template_robustness(
    embedder,
    intents: Sequence[tuple[str, tuple[Constraint, ...]]],
    corpus: Corpus,
    qrels_by_intent: Mapping[str, set[str]],
    templates: Sequence[str] = tuple(f"T{i}" for i in range(1, 13)),
) -> TemplateRobustnessReport:
    """Evaluate every intent under every template; report nDCG dispersion."""
    doc_vectors = embed_texts([d.text for d in corpus.documents], embedder)
    doc_ids = [d.doc_id for d in corpus.documents]
    index = SearchIndex(doc_vectors, doc_ids)
    per_template: dict[str, RetrievalReport] = {}
    per_intent_ndcgs: dict[str, list[float]] = {intent_id: [] for intent_id, _ in intents}
    for template in templates:
        queries = [intent_query(iid, cs, template) for iid, cs in intents]
        report = eval_retrieval(
            embedder, corpus, queries, dict(qrels_by_intent), corpus_embeddings=doc_vectors
        )
        per_template[template] = report
        query_vectors = embed_texts([q.text for q in queries], embedder)
        for query, query_vec in zip(queries, query_vectors):
            ranked = index.ranked_ids(query_vec, 10)
            per_intent_ndcgs[query.qid].append(ndcg_at_k(ranked, qrels_by_intent[query.qid], 10))
    per_intent_std = {
        intent_id: float(np.std(values)) for intent_id, values in per_intent_ndcgs.items()
    }
    return TemplateRobustnessReport(
        per_template=per_template,
        per_intent_std=per_intent_std,
        mean_std=float(np.mean(list(per_intent_std.values()))) if per_intent_std else 0.0,
    )


@dataclass
class ClusterStats:
    intra: float
    inter: float
    ratio: float

    def to_dict(self) -> dict:
        return {"intra": self.intra, "inter": self.inter, "ratio": self.ratio}


def cluster_ratio(embeddings: np.ndarray, labels: Sequence[str]) -> ClusterStats:
    """Mean inter-centroid distance over mean point-to-own-centroid distance."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = list(labels)
    if embeddings.shape[0] != len(labels):
        raise AnalysisError("embeddings and labels must align")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise AnalysisError("cluster ratio needs at least two labels")
    centroids = {}
    intra_distances = []
    for cls in classes:
        members = embeddings[[i for i, l in enumerate(labels) if l == cls]]
        centroid = members.mean(axis=0)
        centroids[cls] = centroid
        intra_distances.extend(np.linalg.norm(members - centroid, axis=1).tolist())
    intra = float(np.mean(intra_distances))
    pairs = [
        float(np.linalg.norm(centroids[a] - centroids[b]))
        for i, a in enumerate(classes)
        for b in classes[i + 1 :]
    ]
    inter = float(np.mean(pairs))
    if intra == 0.0:
        raise AnalysisError("intra-cluster spread is zero; ratio undefined")
    return ClusterStats(intra=intra, inter=inter, ratio=inter / intra)
