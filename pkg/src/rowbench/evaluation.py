"""Retrieval and classification scoring plus the four-metric overall average.

Retrieval runs exact search per query and aggregates MRR@10, nDCG@10 and
recall/precision at the standard cutoffs, with a per-(type, k) nDCG
breakdown. Classification trains an independent linear probe per dataset on
frozen embeddings and reports Accuracy and macro-F1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.linear_model import LogisticRegression

from .errors import EvalError
from .embedders import SearchIndex, embed_texts
from .queries import Query, QrelSet
from .tables import Corpus
from .util import rng_for

logger = logging.getLogger(__name__)

DEFAULT_CUTOFFS = (1, 5, 10, 20, 50, 100)
DEFAULT_TEST_FRACTION = 0.2
SPLIT_SEED = 42
MAX_LABEL_CARDINALITY = 50
MAX_LABEL_RATIO = 0.1

PROBE_MAX_ITER = 1000
PROBE_TOL = 1e-6
PROBE_REGULARIZATION = 1.0


def mrr_at_k(ranked_doc_ids: Sequence[str], relevant: set[str], k: int = 10) -> float:
    """Reciprocal rank of the first relevant document within the top k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    for rank, doc_id in enumerate(ranked_doc_ids[:k], start=1):
        if doc_id in relevant:
            return 1.0 / rank
    return 0.0


def ndcg_at_k(ranked_doc_ids: Sequence[str], relevant: set[str], k: int = 10) -> float:
    """Binary-relevance nDCG@k: DCG over log2(rank+1), normalized by the ideal."""
    if k < 1:
        raise ValueError("k must be at least 1")
    dcg = sum(
        1.0 / math.log2(rank + 1)
        for rank, doc_id in enumerate(ranked_doc_ids[:k], start=1)
        if doc_id in relevant
    )
    ideal_hits = min(len(relevant), k)
    if ideal_hits == 0:
        return 0.0
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, ideal_hits + 1))
    return dcg / idcg


def recall_at_k(ranked_doc_ids: Sequence[str], relevant: set[str], k: int) -> float:
    if not relevant:
        return 0.0
    hits = sum(1 for doc_id in ranked_doc_ids[:k] if doc_id in relevant)
    return hits / len(relevant)


def precision_at_k(ranked_doc_ids: Sequence[str], relevant: set[str], k: int) -> float:
    hits = sum(1 for doc_id in ranked_doc_ids[:k] if doc_id in relevant)
    return hits / k


@dataclass
class RetrievalReport:
    mrr_at_10: float
    ndcg_at_10: float
    recall: dict[int, float]
    precision: dict[int, float]
    breakdown: dict[tuple[str, int], float]
    breakdown_counts: dict[tuple[str, int], int]
    query_count: int
    skipped_queries: int = 0

    def to_dict(self) -> dict:
        return {
            "mrr_at_10": self.mrr_at_10,
            "ndcg_at_10": self.ndcg_at_10,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
            "precision": {str(k): v for k, v in sorted(self.precision.items())},
            "breakdown": {f"{t}/{k}": v for (t, k), v in sorted(self.breakdown.items())},
            "breakdown_counts": {f"{t}/{k}": v for (t, k), v in sorted(self.breakdown_counts.items())},
            "query_count": self.query_count,
            "skipped_queries": self.skipped_queries,
        }


def eval_retrieval(
    embedder,
    corpus: Corpus,
    queries: Sequence[Query],
    qrels: QrelSet,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    corpus_embeddings: np.ndarray | None = None,
) -> RetrievalReport:
    """Embed the corpus once, rank per query, aggregate the metrics."""
    missing = [q.qid for q in queries if q.qid not in qrels]
    if missing:
        raise EvalError(f"qrels missing for queries: {missing[:5]}")
    doc_ids = [d.doc_id for d in corpus.documents]
    if corpus_embeddings is None:
        corpus_embeddings = embed_texts([d.text for d in corpus.documents], embedder)
    index = SearchIndex(corpus_embeddings, doc_ids)
    max_cutoff = max(max(cutoffs), 10)

    query_vectors = _embed_queries(embedder, queries)
    mrrs, ndcgs = [], []
    recalls = {c: [] for c in cutoffs}
    precisions = {c: [] for c in cutoffs}
    cell_ndcgs: dict[tuple[str, int], list[float]] = {}
    skipped = 0
    for query, query_vec in zip(queries, query_vectors):
        if query_vec is None:
            skipped += 1
            continue
        ranked = index.ranked_ids(query_vec, max_cutoff)
        relevant = qrels[query.qid]
        mrrs.append(mrr_at_k(ranked, relevant, 10))
        ndcg = ndcg_at_k(ranked, relevant, 10)
        ndcgs.append(ndcg)
        for c in cutoffs:
            recalls[c].append(recall_at_k(ranked, relevant, c))
            precisions[c].append(precision_at_k(ranked, relevant, c))
        cell_ndcgs.setdefault((query.qtype, query.k), []).append(ndcg)
    if not mrrs:
        raise EvalError("no queries evaluated")
    return RetrievalReport(
        mrr_at_10=float(np.mean(mrrs)),
        ndcg_at_10=float(np.mean(ndcgs)),
        recall={c: float(np.mean(v)) for c, v in recalls.items()},
        precision={c: float(np.mean(v)) for c, v in precisions.items()},
        breakdown={cell: float(np.mean(v)) for cell, v in cell_ndcgs.items()},
        breakdown_counts={cell: len(v) for cell, v in cell_ndcgs.items()},
        query_count=len(mrrs),
        skipped_queries=skipped,
    )


def _embed_queries(embedder, queries: Sequence[Query]) -> list[np.ndarray | None]:
    """Batch-embed query texts; on batch failure fall back to per-query embeds
    so individual failures can be skipped and counted."""
    texts = [q.text for q in queries]
    try:
        vectors = embed_texts(texts, embedder)
        return [vectors[i] for i in range(len(texts))]
    except Exception:
        result: list[np.ndarray | None] = []
        for query in queries:
            try:
                result.append(embed_texts([query.text], embedder)[0])
            except Exception as exc:
                logger.warning("query %s failed to embed: %s", query.qid, exc)
                result.append(None)
        return result


def stratified_split(
    labels: Sequence[str], test_fraction: float = DEFAULT_TEST_FRACTION, seed: int = SPLIT_SEED
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class split with at least one sample of each class on both sides.

    Classes with fewer than two samples are dropped with a warning. The test
    share per class is floor(n * fraction + 0.5), clamped to [1, n-1].
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    labels = list(labels)
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    train_idx: list[int] = []
    test_idx: list[int] = []
    kept = 0
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 2:
            logger.warning("class %r has %d sample(s), dropped from the split", label, len(members))
            continue
        kept += 1
        rng = rng_for(seed, "split", label)
        perm = rng.permutation(len(members))
        n_test = int(math.floor(len(members) * test_fraction + 0.5))
        n_test = min(max(n_test, 1), len(members) - 1)
        for j in perm[:n_test]:
            test_idx.append(members[j])
        for j in perm[n_test:]:
            train_idx.append(members[j])
    if not kept:
        raise EvalError("every class was dropped; cannot split")
    return np.array(sorted(train_idx), dtype=np.int64), np.array(sorted(test_idx), dtype=np.int64)


def train_probe(embeddings: np.ndarray, labels: Sequence[str]) -> LogisticRegression:
    """Multinomial logistic-regression probe on frozen embeddings.

    L2 regularization strength 1.0, at most 1000 iterations, tolerance 1e-6,
    deterministic for fixed input.
    """
    classes = set(labels)
    if len(classes) < 2:
        raise EvalError("probe needs at least two classes")
    probe = LogisticRegression(
        C=PROBE_REGULARIZATION,
        max_iter=PROBE_MAX_ITER,
        tol=PROBE_TOL,
        random_state=42,
    )
    probe.fit(np.asarray(embeddings, dtype=np.float64), np.asarray(labels))
    return probe


def accuracy_score(true_labels: Sequence[str], predicted: Sequence[str]) -> float:
    if len(true_labels) != len(predicted):
        raise ValueError("label lists must align")
    if not true_labels:
        return 0.0
    return sum(t == p for t, p in zip(true_labels, predicted)) / len(true_labels)


def macro_f1_score(true_labels: Sequence[str], predicted: Sequence[str]) -> float:
    """Unweighted mean of per-class F1 over classes present in the truth."""
    if len(true_labels) != len(predicted):
        raise ValueError("label lists must align")
    classes = sorted(set(true_labels))
    if not classes:
        return 0.0
    f1s = []
    for cls in classes:
        tp = sum(1 for t, p in zip(true_labels, predicted) if t == cls and p == cls)
        fp = sum(1 for t, p in zip(true_labels, predicted) if t != cls and p == cls)
        fn = sum(1 for t, p in zip(true_labels, predicted) if t == cls and p != cls)
        f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
    return float(np.mean(f1s))


@dataclass
class ClassificationDataset:
    dataset_id: str
    embeddings: np.ndarray
    labels: list[str]


@dataclass
class ClassificationReport:
    per_dataset: dict[str, dict[str, float]]
    accuracy: float
    macro_f1: float
    skipped: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_dataset": self.per_dataset,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "skipped": self.skipped,
        }


def eval_classification(
    datasets: Sequence[ClassificationDataset],
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = SPLIT_SEED,
) -> ClassificationReport:
    """Probe every qualifying dataset; aggregate unweighted means.

    Datasets are skipped when label cardinality exceeds 50 or the
    label-to-sample ratio exceeds 0.1, with the reason recorded.
    """
    per_dataset: dict[str, dict[str, float]] = {}
    skipped: list[dict] = []
    for ds in datasets:
        n = len(ds.labels)
        cardinality = len(set(ds.labels))
        if cardinality > MAX_LABEL_CARDINALITY:
            skipped.append({"dataset_id": ds.dataset_id, "reason": "cardinality"})
            continue
        if n == 0 or cardinality / n > MAX_LABEL_RATIO:
            skipped.append({"dataset_id": ds.dataset_id, "reason": "ratio"})
            continue
        try:
            train_idx, test_idx = stratified_split(ds.labels, test_fraction, seed)
        except EvalError:
            skipped.append({"dataset_id": ds.dataset_id, "reason": "degenerate"})
            continue
        labels = np.asarray(ds.labels)
        train_labels = labels[train_idx]
        if len(set(train_labels.tolist())) < 2:
            skipped.append({"dataset_id": ds.dataset_id, "reason": "degenerate"})
            continue
        probe = train_probe(ds.embeddings[train_idx], train_labels.tolist())
        predicted = probe.predict(ds.embeddings[test_idx]).tolist()
        truth = labels[test_idx].tolist()
        per_dataset[ds.dataset_id] = {
            "accuracy": accuracy_score(truth, predicted),
            "macro_f1": macro_f1_score(truth, predicted),
            "samples": n,
            "classes": cardinality,
        }
    if not per_dataset:
        raise EvalError("no dataset qualified for classification evaluation")
    return ClassificationReport(
        per_dataset=per_dataset,
        accuracy=float(np.mean([m["accuracy"] for m in per_dataset.values()])),
        macro_f1=float(np.mean([m["macro_f1"] for m in per_dataset.values()])),
        skipped=skipped,
    )


@dataclass
class OverallReport:
    accuracy: float
    macro_f1: float
    mrr_at_10: float
    ndcg_at_10: float
    overall: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "mrr_at_10": self.mrr_at_10,
            "ndcg_at_10": self.ndcg_at_10,
            "overall": self.overall,
        }


def overall_score(values: Sequence[float]) -> float:
    """Arithmetic mean of (accuracy, macro-F1, MRR@10, nDCG@10)."""
    if len(values) != 4:
        raise ValueError("overall takes exactly the four task metrics")
    return float(np.mean(values))


def overall(cls_report: ClassificationReport, ret_report: RetrievalReport) -> OverallReport:
    score = overall_score(
        [cls_report.accuracy, cls_report.macro_f1, ret_report.mrr_at_10, ret_report.ndcg_at_10]
    )
    return OverallReport(
        accuracy=cls_report.accuracy,
        macro_f1=cls_report.macro_f1,
        mrr_at_10=ret_report.mrr_at_10,
        ndcg_at_10=ret_report.ndcg_at_10,
        overall=score,
    )
